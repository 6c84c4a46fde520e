//! Pre-norm transformer encoder layers over an `S x D` sequence.

use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{EncoderLayer, LayerNorm, Linear};
use super::Real;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Sinusoidal table: `PE(pos, 2i) = sin(pos / 10000^(2i/D))`, odd columns use cosine.
pub fn positional_encoding<F: Real>(
    seq_len: usize,
    d: usize,
    max_seq_len: usize,
) -> Result<Vec<F>> {
    if seq_len > max_seq_len {
        return Err(Error::Shape(format!(
            "sequence of {seq_len} exceeds max_seq_len {max_seq_len}"
        )));
    }
    let mut pe = vec![F::zero(); seq_len * d];
    for pos in 0..seq_len {
        for c in 0..d {
            let pair = (c / 2 * 2) as f64;
            let angle = pos as f64 / Float::powf(10_000.0f64, pair / d as f64);
            pe[pos * d + c] = F::lit(if c % 2 == 0 {
                Float::sin(angle)
            } else {
                Float::cos(angle)
            });
        }
    }
    Ok(pe)
}

/// `y = x W^T + b` over `rows` rows.
pub(crate) fn linear_forward<F: Real>(lin: &Linear<F>, x: &[F], rows: usize) -> Vec<F> {
    let (out_dim, in_dim) = (lin.weight.dims[0], lin.weight.dims[1]);
    let w = &lin.weight.data;
    let mut y = vec![F::zero(); rows * out_dim];
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            y[r * out_dim + o] =
                lin.bias.data[o] + xr.iter().zip(wr).map(|(&a, &b)| a * b).sum::<F>();
        }
    }
    y
}

/// Accumulates parameter gradients and returns `dL/dx`.
pub(crate) fn linear_backward<F: Real>(
    lin: &Linear<F>,
    grad: &mut Linear<F>,
    x: &[F],
    dy: &[F],
    rows: usize,
) -> Vec<F> {
    let (out_dim, in_dim) = (lin.weight.dims[0], lin.weight.dims[1]);
    let mut dx = vec![F::zero(); rows * in_dim];
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        for o in 0..out_dim {
            let g = dy[r * out_dim + o];
            if g == F::zero() {
                continue;
            }
            grad.bias.data[o] += g;
            let gw = &mut grad.weight.data[o * in_dim..(o + 1) * in_dim];
            for (a, &b) in gw.iter_mut().zip(xr) {
                *a += g * b;
            }
            let wr = &lin.weight.data[o * in_dim..(o + 1) * in_dim];
            for (a, &b) in dx[r * in_dim..(r + 1) * in_dim].iter_mut().zip(wr) {
                *a += g * b;
            }
        }
    }
    dx
}

pub(crate) struct NormCache<F> {
    xhat: Vec<F>,
    rstd: Vec<F>,
}

pub(crate) fn layer_norm_forward<F: Real>(
    ln: &LayerNorm<F>,
    x: &[F],
    rows: usize,
    d: usize,
) -> (Vec<F>, NormCache<F>) {
    let mut y = vec![F::zero(); rows * d];
    let mut xhat = vec![F::zero(); rows * d];
    let mut rstd = vec![F::zero(); rows];
    let inv_d = F::one() / F::lit(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<F>() * inv_d;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
        let s = F::one() / (var + F::lit(LN_EPS)).sqrt();
        rstd[r] = s;
        for c in 0..d {
            let h = (xr[c] - mean) * s;
            xhat[r * d + c] = h;
            y[r * d + c] = ln.gamma.data[c] * h + ln.beta.data[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward<F: Real>(
    ln: &LayerNorm<F>,
    grad: &mut LayerNorm<F>,
    cache: &NormCache<F>,
    dy: &[F],
    rows: usize,
    d: usize,
) -> Vec<F> {
    let mut dx = vec![F::zero(); rows * d];
    let n = F::lit(d as f64);
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let g = &dy[r * d..(r + 1) * d];
        let mut sum_dxh = F::zero();
        let mut sum_dxh_xh = F::zero();
        for c in 0..d {
            grad.gamma.data[c] += g[c] * xh[c];
            grad.beta.data[c] += g[c];
            let dxh = g[c] * ln.gamma.data[c];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[c];
        }
        let k = cache.rstd[r] / n;
        for c in 0..d {
            let dxh = g[c] * ln.gamma.data[c];
            dx[r * d + c] = k * (n * dxh - sum_dxh - xh[c] * sum_dxh_xh);
        }
    }
    dx
}

pub(crate) struct LayerCache<F> {
    norm1: NormCache<F>,
    h1: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// `heads x S x S` attention weights.
    probs: Vec<F>,
    ctx: Vec<F>,
    norm2: NormCache<F>,
    h2: Vec<F>,
    f1: Vec<F>,
    act: Vec<F>,
}

pub(crate) fn layer_forward<F: Real>(
    layer: &EncoderLayer<F>,
    x: &[F],
    s: usize,
    d: usize,
    heads: usize,
) -> (Vec<F>, LayerCache<F>) {
    let hd = d / heads;
    let scale = F::one() / F::lit(hd as f64).sqrt();
    let (h1, norm1) = layer_norm_forward(&layer.norm1, x, s, d);
    let q = linear_forward(&layer.query, &h1, s);
    let k = linear_forward(&layer.key, &h1, s);
    let v = linear_forward(&layer.value, &h1, s);
    let mut probs = vec![F::zero(); heads * s * s];
    let mut ctx = vec![F::zero(); s * d];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..s {
            let row = &mut probs[(h * s + i) * s..(h * s + i + 1) * s];
            let qi = &q[i * d + off..i * d + off + hd];
            for j in 0..s {
                let kj = &k[j * d + off..j * d + off + hd];
                row[j] = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<F>() * scale;
            }
            let m = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for p in row.iter_mut() {
                *p = (*p - m).exp();
                z += *p;
            }
            for p in row.iter_mut() {
                *p /= z;
            }
            for j in 0..s {
                let pj = row[j];
                for c in 0..hd {
                    ctx[i * d + off + c] += pj * v[j * d + off + c];
                }
            }
        }
    }
    let attn = linear_forward(&layer.out, &ctx, s);
    let x1: Vec<F> = x.iter().zip(&attn).map(|(&a, &b)| a + b).collect();
    let (h2, norm2) = layer_norm_forward(&layer.norm2, &x1, s, d);
    let f1 = linear_forward(&layer.ff1, &h2, s);
    let act: Vec<F> = f1.iter().map(|&v| v.max(F::zero())).collect();
    let f2 = linear_forward(&layer.ff2, &act, s);
    let out: Vec<F> = x1.iter().zip(&f2).map(|(&a, &b)| a + b).collect();
    (
        out,
        LayerCache {
            norm1,
            h1,
            q,
            k,
            v,
            probs,
            ctx,
            norm2,
            h2,
            f1,
            act,
        },
    )
}

pub(crate) fn layer_backward<F: Real>(
    layer: &EncoderLayer<F>,
    grad: &mut EncoderLayer<F>,
    cache: &LayerCache<F>,
    d_out: &[F],
    s: usize,
    d: usize,
    heads: usize,
) -> Vec<F> {
    let hd = d / heads;
    let scale = F::one() / F::lit(hd as f64).sqrt();
    // feed-forward branch
    let d_act = linear_backward(&layer.ff2, &mut grad.ff2, &cache.act, d_out, s);
    let d_f1: Vec<F> = d_act
        .iter()
        .zip(&cache.f1)
        .map(|(&g, &f)| if f > F::zero() { g } else { F::zero() })
        .collect();
    let d_h2 = linear_backward(&layer.ff1, &mut grad.ff1, &cache.h2, &d_f1, s);
    let d_x1_norm = layer_norm_backward(&layer.norm2, &mut grad.norm2, &cache.norm2, &d_h2, s, d);
    let d_x1: Vec<F> = d_out.iter().zip(&d_x1_norm).map(|(&a, &b)| a + b).collect();
    // attention branch
    let d_ctx = linear_backward(&layer.out, &mut grad.out, &cache.ctx, &d_x1, s);
    let mut d_q = vec![F::zero(); s * d];
    let mut d_k = vec![F::zero(); s * d];
    let mut d_v = vec![F::zero(); s * d];
    let mut d_p = vec![F::zero(); s];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..s {
            let p = &cache.probs[(h * s + i) * s..(h * s + i + 1) * s];
            let gi = &d_ctx[i * d + off..i * d + off + hd];
            for j in 0..s {
                let vj = &cache.v[j * d + off..j * d + off + hd];
                d_p[j] = gi.iter().zip(vj).map(|(&a, &b)| a * b).sum::<F>();
                for c in 0..hd {
                    d_v[j * d + off + c] += p[j] * gi[c];
                }
            }
            let dot_pdp = p.iter().zip(&d_p).map(|(&a, &b)| a * b).sum::<F>();
            for j in 0..s {
                let ds = p[j] * (d_p[j] - dot_pdp) * scale;
                if ds == F::zero() {
                    continue;
                }
                for c in 0..hd {
                    d_q[i * d + off + c] += ds * cache.k[j * d + off + c];
                    d_k[j * d + off + c] += ds * cache.q[i * d + off + c];
                }
            }
        }
    }
    let mut d_h1 = linear_backward(&layer.query, &mut grad.query, &cache.h1, &d_q, s);
    for (a, b) in d_h1.iter_mut().zip(linear_backward(
        &layer.key,
        &mut grad.key,
        &cache.h1,
        &d_k,
        s,
    )) {
        *a += b;
    }
    for (a, b) in d_h1.iter_mut().zip(linear_backward(
        &layer.value,
        &mut grad.value,
        &cache.h1,
        &d_v,
        s,
    )) {
        *a += b;
    }
    let d_x_norm = layer_norm_backward(&layer.norm1, &mut grad.norm1, &cache.norm1, &d_h1, s, d);
    d_x1.iter().zip(&d_x_norm).map(|(&a, &b)| a + b).collect()
}
