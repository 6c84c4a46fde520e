//! Patch-sequence transformer classifier.
//!
//! Every patch goes through a small convolutional encoder (3x3 convolution,
//! rectifier and 2x2 max pooling per stage, global average pooling, linear map
//! to the embedding width). The embeddings, preceded by an optional learned
//! class token and offset by sinusoidal positional encodings, pass through
//! pre-norm transformer encoder layers and a final layer norm. The position-0
//! output feeds a linear head over the eight genres.
//!
//! Gradients are computed by hand-written reverse-mode passes over the cached
//! forward activations. All arithmetic is generic over [`Real`] so the same
//! code runs in `f32` for training and `f64` for gradient checks.

use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use serde::{Deserialize, Serialize};

use crate::dataset::N_GENRES;
use crate::{Error, Result};

mod adam;
mod encoder;
mod loss;
mod network;
mod params;
mod tensor;
mod train;
mod transformer;

pub use adam::Adam;
pub use encoder::{encode_patch, PatchCache};
pub use loss::{cross_entropy, cross_entropy_grad, kl_divergence, log_softmax, softmax};
pub use network::{backward, embed, forward, predict, ForwardTrace, Prediction};
pub use params::ModelParams;
pub use tensor::Tensor;
pub use train::{
    example_gradient, train, EpochLog, Example, ExampleSource, GradientRunner, LabelMode,
    Sequential, TrainConfig, TrainOutcome, VecSource,
};
pub use transformer::positional_encoding;

/// Scalar type the network computes in.
pub trait Real:
    Float
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub n_classes: usize,
    pub in_channels: usize,
    /// Output channels of each convolution stage.
    pub conv_channels: Vec<usize>,
    pub use_class_token: bool,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            n_heads: 4,
            n_layers: 2,
            ffn_dim: 128,
            n_classes: N_GENRES,
            in_channels: 3,
            conv_channels: vec![16, 32, 64],
            use_class_token: true,
            max_seq_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes != N_GENRES {
            return Err(Error::Config(format!("n_classes must be {N_GENRES}")));
        }
        if self.embed_dim == 0 || self.n_heads == 0 || !self.embed_dim.is_multiple_of(self.n_heads)
        {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.ffn_dim == 0 || self.in_channels == 0 || self.conv_channels.is_empty() {
            return Err(Error::Config("empty layer width".into()));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::Config(
                "conv stages need at least one channel".into(),
            ));
        }
        if self.max_seq_len < 2 {
            return Err(Error::Config("max_seq_len must be at least 2".into()));
        }
        Ok(())
    }

    /// Largest number of patches a sequence may hold.
    pub fn max_patches(&self) -> usize {
        self.max_seq_len - usize::from(self.use_class_token)
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}

pub(crate) fn check_finite<F: Real>(values: &[F], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what.into()))
    }
}
