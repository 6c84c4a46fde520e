//! Convolutional patch encoder and its backward pass.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{Conv, ModelParams};
use super::{check_finite, ModelConfig, Real};
use crate::{Error, Result};

struct Stage<F> {
    input: Vec<F>,
    pre_act: Vec<F>,
    argmax: Vec<u32>,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
}

/// Activations retained from [`encode_patch`] for the backward pass.
pub struct PatchCache<F> {
    stages: Vec<Stage<F>>,
    pooled_len: usize,
    pooled: Vec<F>,
    gap: Vec<F>,
}

/// Sum of elementwise products with eight independent accumulators.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    const L: usize = 8;
    let mut acc = [F::zero(); L];
    let n = a.len().min(b.len());
    let chunks = n / L;
    for c in 0..chunks {
        let xa = &a[c * L..c * L + L];
        let xb = &b[c * L..c * L + L];
        for l in 0..L {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut s = acc.iter().copied().sum::<F>();
    for i in chunks * L..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<F: Real>(k: F, x: &[F], y: &mut [F]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += k * v;
    }
}

/// Output-column range `[x0, x1)` valid for kernel column offset `dx`.
#[inline]
fn col_range(w: usize, dx: isize) -> (usize, usize) {
    let x0 = if dx < 0 { 1 } else { 0 };
    let x1 = if dx > 0 { w - 1 } else { w };
    (x0, x1)
}

fn conv3x3_forward<F: Real>(
    conv: &Conv<F>,
    input: &[F],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
) -> Vec<F> {
    let plane = h * w;
    let mut out = vec![F::zero(); cout * plane];
    let weight = &conv.weight.data;
    for o in 0..cout {
        let out_c = &mut out[o * plane..(o + 1) * plane];
        let b = conv.bias.data[o];
        out_c.iter_mut().for_each(|v| *v = b);
        for y in 0..h {
            for ky in 0..3 {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let sy = sy as usize;
                for i in 0..cin {
                    let in_row = &input[i * plane + sy * w..i * plane + (sy + 1) * w];
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = col_range(w, dx);
                        let k = weight[((o * cin + i) * 3 + ky) * 3 + kx];
                        let src = &in_row[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize];
                        axpy(k, src, &mut out_c[y * w + x0..y * w + x1]);
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward<F: Real>(
    conv: &Conv<F>,
    grad: &mut Conv<F>,
    input: &[F],
    d_out: &[F],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    want_input_grad: bool,
) -> Option<Vec<F>> {
    let plane = h * w;
    let mut d_in = if want_input_grad {
        vec![F::zero(); cin * plane]
    } else {
        Vec::new()
    };
    let weight = &conv.weight.data;
    for o in 0..cout {
        let d_c = &d_out[o * plane..(o + 1) * plane];
        grad.bias.data[o] += d_c.iter().copied().sum::<F>();
        for i in 0..cin {
            for ky in 0..3 {
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = col_range(w, dx);
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let k = weight[widx];
                    let mut acc = F::zero();
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let sy = sy as usize;
                        let g = &d_c[y * w + x0..y * w + x1];
                        let lo = i * plane + sy * w + (x0 as isize + dx) as usize;
                        let hi = i * plane + sy * w + (x1 as isize + dx) as usize;
                        acc += dot(g, &input[lo..hi]);
                        if want_input_grad {
                            axpy(k, g, &mut d_in[lo..hi]);
                        }
                    }
                    grad.weight.data[widx] += acc;
                }
            }
        }
    }
    want_input_grad.then_some(d_in)
}

/// Rectify then 2x2 max-pool (floor), recording the winning index.
fn relu_maxpool<F: Real>(pre: &[F], c: usize, h: usize, w: usize) -> (Vec<F>, Vec<u32>) {
    let (hp, wp) = (h / 2, w / 2);
    let mut out = vec![F::zero(); c * hp * wp];
    let mut arg = vec![0u32; c * hp * wp];
    for ch in 0..c {
        let base = ch * h * w;
        for py in 0..hp {
            for px in 0..wp {
                let mut best_i = base + 2 * py * w + 2 * px;
                let mut best = F::zero().max(pre[best_i]);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * py + dy) * w + 2 * px + dx;
                    let v = F::zero().max(pre[idx]);
                    if v > best {
                        best = v;
                        best_i = idx;
                    }
                }
                let o = (ch * hp + py) * wp + px;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

/// Embed one `in_channels x h x w` patch into `embed_dim` values.
pub fn encode_patch<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    patch: &[f32],
    h: usize,
    w: usize,
) -> Result<(Vec<F>, PatchCache<F>)> {
    if patch.len() != cfg.in_channels * h * w {
        return Err(Error::Shape(format!(
            "patch has {} values, expected {}x{h}x{w}",
            patch.len(),
            cfg.in_channels
        )));
    }
    if params.convs.len() != cfg.conv_channels.len() {
        return Err(Error::Shape(
            "encoder depth does not match configuration".into(),
        ));
    }
    if patch.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("patch input".into()));
    }
    let mut x: Vec<F> = patch.iter().map(|&v| F::lit(f64::from(v))).collect();
    let (mut cin, mut hh, mut ww) = (cfg.in_channels, h, w);
    let mut stages = Vec::with_capacity(params.convs.len());
    for (conv, &cout) in params.convs.iter().zip(&cfg.conv_channels) {
        if hh < 2 || ww < 2 {
            return Err(Error::Shape(format!(
                "patch {h}x{w} too small for {} pooling stages",
                cfg.conv_channels.len()
            )));
        }
        let pre_act = conv3x3_forward(conv, &x, cin, cout, hh, ww);
        let (pooled, argmax) = relu_maxpool(&pre_act, cout, hh, ww);
        stages.push(Stage {
            input: x,
            pre_act,
            argmax,
            cin,
            cout,
            h: hh,
            w: ww,
        });
        x = pooled;
        cin = cout;
        hh /= 2;
        ww /= 2;
    }
    let n = hh * ww;
    let inv = F::one() / F::lit(n as f64);
    let gap: Vec<F> = (0..cin)
        .map(|c| x[c * n..(c + 1) * n].iter().copied().sum::<F>() * inv)
        .collect();
    let d = cfg.embed_dim;
    let emb: Vec<F> = (0..d)
        .map(|j| {
            params.proj.bias.data[j] + dot(&params.proj.weight.data[j * cin..(j + 1) * cin], &gap)
        })
        .collect();
    check_finite(&emb, "patch embedding")?;
    Ok((
        emb,
        PatchCache {
            stages,
            pooled_len: n,
            pooled: x,
            gap,
        },
    ))
}

/// Backpropagate an embedding gradient into encoder parameter gradients.
pub(crate) fn encode_patch_backward<F: Real>(
    params: &ModelParams<F>,
    cache: &PatchCache<F>,
    d_emb: &[F],
    grads: &mut ModelParams<F>,
) {
    let c_last = cache.gap.len();
    let mut d_gap = vec![F::zero(); c_last];
    for (j, &g) in d_emb.iter().enumerate() {
        grads.proj.bias.data[j] += g;
        axpy(
            g,
            &cache.gap,
            &mut grads.proj.weight.data[j * c_last..(j + 1) * c_last],
        );
        axpy(
            g,
            &params.proj.weight.data[j * c_last..(j + 1) * c_last],
            &mut d_gap,
        );
    }
    let n = cache.pooled_len;
    let inv = F::one() / F::lit(n as f64);
    let mut d_pooled = vec![F::zero(); cache.pooled.len()];
    for c in 0..c_last {
        let g = d_gap[c] * inv;
        d_pooled[c * n..(c + 1) * n].iter_mut().for_each(|v| *v = g);
    }
    for (s, stage) in cache.stages.iter().enumerate().rev() {
        let mut d_pre = vec![F::zero(); stage.pre_act.len()];
        for (o, &idx) in stage.argmax.iter().enumerate() {
            let idx = idx as usize;
            if stage.pre_act[idx] > F::zero() {
                d_pre[idx] += d_pooled[o];
            }
        }
        let d_in = conv3x3_backward(
            &params.convs[s],
            &mut grads.convs[s],
            &stage.input,
            &d_pre,
            stage.cin,
            stage.cout,
            stage.h,
            stage.w,
            s > 0,
        );
        if let Some(d_in) = d_in {
            d_pooled = d_in;
        }
    }
}
