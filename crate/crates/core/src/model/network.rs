//! Whole-network forward and backward passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::float::Float;

use super::encoder::{encode_patch, encode_patch_backward, PatchCache};
use super::loss::softmax;
use super::params::ModelParams;
use super::transformer::{
    layer_backward, layer_forward, layer_norm_backward, layer_norm_forward, linear_backward,
    linear_forward, positional_encoding, LayerCache, NormCache,
};
use super::{check_finite, ModelConfig, Real};
use crate::dataset::{argmax, Genre, N_GENRES};
use crate::features::PatchSequence;
use crate::{Error, Result};

/// Activations of one forward pass, consumed by [`backward`].
pub struct ForwardTrace<F> {
    patches: Vec<PatchCache<F>>,
    layers: Vec<LayerCache<F>>,
    final_norm: NormCache<F>,
    seq_len: usize,
    /// Position-0 output after the final layer norm; the head's input.
    pub embedding: Vec<F>,
    pub logits: Vec<F>,
    /// `softmax(logits)`
    pub probs: Vec<F>,
}

/// Patch embeddings are multiplied by `sqrt(D)` before the positional table is added.
fn embed_scale<F: Real>(d: usize) -> F {
    F::lit(Float::sqrt(d as f64))
}

/// Run the classifier over one patch sequence.
pub fn forward<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    patches: &PatchSequence,
) -> Result<ForwardTrace<F>> {
    let m = patches.count;
    if m == 0 || m > cfg.max_patches() {
        return Err(Error::Shape(format!(
            "{m} patches outside the supported range 1..={}",
            cfg.max_patches()
        )));
    }
    if patches.channels != cfg.in_channels {
        return Err(Error::Shape(format!(
            "patches have {} channels, model expects {}",
            patches.channels, cfg.in_channels
        )));
    }
    if params.layers.len() != cfg.n_layers {
        return Err(Error::Shape(
            "layer count does not match configuration".into(),
        ));
    }
    let d = cfg.embed_dim;
    let offset = usize::from(cfg.use_class_token);
    let s = m + offset;
    let mut x = positional_encoding::<F>(s, d, cfg.max_seq_len)?;
    if cfg.use_class_token {
        for (a, &b) in x[..d].iter_mut().zip(&params.class_token.data) {
            *a += b;
        }
    }
    let scale = embed_scale::<F>(d);
    let mut caches = Vec::with_capacity(m);
    for j in 0..m {
        let (emb, cache) =
            encode_patch(params, cfg, patches.patch(j), patches.height, patches.width)?;
        let row = (j + offset) * d;
        for (a, b) in x[row..row + d].iter_mut().zip(emb) {
            *a += scale * b;
        }
        caches.push(cache);
    }
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let (y, cache) = layer_forward(layer, &x, s, d, cfg.n_heads);
        check_finite(&y, "transformer activation")?;
        x = y;
        layers.push(cache);
    }
    let (embedding, final_norm) = layer_norm_forward(&params.final_norm, &x[..d], 1, d);
    let logits = linear_forward(&params.head, &embedding, 1);
    check_finite(&logits, "logits")?;
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        patches: caches,
        layers,
        final_norm,
        seq_len: s,
        embedding,
        logits,
        probs,
    })
}

/// Accumulate `dL/dθ` into `grads` given `dL/dlogits`.
///
/// Fails with a numeric error naming the first parameter tensor whose
/// gradient is not finite.
pub fn backward<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    trace: &ForwardTrace<F>,
    d_logits: &[F],
    grads: &mut ModelParams<F>,
) -> Result<()> {
    if d_logits.len() != N_GENRES {
        return Err(Error::Shape(format!(
            "{} logit gradients, expected {N_GENRES}",
            d_logits.len()
        )));
    }
    let d = cfg.embed_dim;
    let s = trace.seq_len;
    let d_emb = linear_backward(&params.head, &mut grads.head, &trace.embedding, d_logits, 1);
    let d_row0 = layer_norm_backward(
        &params.final_norm,
        &mut grads.final_norm,
        &trace.final_norm,
        &d_emb,
        1,
        d,
    );
    let mut dx = vec![F::zero(); s * d];
    dx[..d].copy_from_slice(&d_row0);
    for (l, cache) in trace.layers.iter().enumerate().rev() {
        dx = layer_backward(
            &params.layers[l],
            &mut grads.layers[l],
            cache,
            &dx,
            s,
            d,
            cfg.n_heads,
        );
    }
    let offset = usize::from(cfg.use_class_token);
    if cfg.use_class_token {
        for (a, &b) in grads.class_token.data.iter_mut().zip(&dx[..d]) {
            *a += b;
        }
    }
    let scale = embed_scale::<F>(d);
    for (j, cache) in trace.patches.iter().enumerate() {
        let row = (j + offset) * d;
        let d_emb: Vec<F> = dx[row..row + d].iter().map(|&g| scale * g).collect();
        encode_patch_backward(params, cache, &d_emb, grads);
    }
    match grads.first_non_finite() {
        Some(name) => Err(Error::Numeric(format!("gradient of {name}"))),
        None => Ok(()),
    }
}

/// Classifier output for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: [f64; N_GENRES],
    pub probs: [f64; N_GENRES],
    pub embedding: Vec<f64>,
}

impl Prediction {
    pub fn genre(&self) -> Genre {
        Genre::ALL[argmax(&self.probs)]
    }
}

pub fn predict<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    patches: &PatchSequence,
) -> Result<Prediction> {
    let t = forward(params, cfg, patches)?;
    let mut logits = [0.0; N_GENRES];
    let mut probs = [0.0; N_GENRES];
    for k in 0..N_GENRES {
        logits[k] = t.logits[k].as_f64();
        probs[k] = t.probs[k].as_f64();
    }
    Ok(Prediction {
        logits,
        probs,
        embedding: t.embedding.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Pre-head representation of one clip.
pub fn embed<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    patches: &PatchSequence,
) -> Result<Vec<f64>> {
    Ok(predict(params, cfg, patches)?.embedding)
}
