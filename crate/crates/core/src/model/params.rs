use crate::float::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ModelConfig, Real, Tensor};
use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    /// `out x in`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<F> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<F> {
    /// `out x in x 3 x 3`
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub norm1: LayerNorm<F>,
    pub query: Linear<F>,
    pub key: Linear<F>,
    pub value: Linear<F>,
    pub out: Linear<F>,
    pub norm2: LayerNorm<F>,
    pub ff1: Linear<F>,
    pub ff2: Linear<F>,
}

/// Every learnable tensor of the classifier.
///
/// The same struct doubles as a gradient buffer and as Adam moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub convs: Vec<Conv<F>>,
    pub proj: Linear<F>,
    pub class_token: Tensor<F>,
    pub layers: Vec<EncoderLayer<F>>,
    pub final_norm: LayerNorm<F>,
    pub head: Linear<F>,
    pub init_seed: u64,
}

fn linear<F: Real>(out: usize, inp: usize, rng: Option<&mut Stream>) -> Linear<F> {
    let mut weight = Tensor::zeros(&[out, inp]);
    if let Some(rng) = rng {
        let bound = 1.0 / Float::sqrt(inp as f64);
        for w in &mut weight.data {
            *w = F::lit(rng.uniform_in(-bound, bound));
        }
    }
    Linear {
        weight,
        bias: Tensor::zeros(&[out]),
    }
}

fn layer_norm<F: Real>(d: usize, fill: F) -> LayerNorm<F> {
    LayerNorm {
        gamma: Tensor::filled(&[d], fill),
        beta: Tensor::zeros(&[d]),
    }
}

impl<F: Real> ModelParams<F> {
    /// Fan-in uniform weights, zero biases, unit norms, small normal class token.
    ///
    /// Conv kernels use the rectifier gain `sqrt(6 / fan_in)`, and each
    /// first-stage kernel slice has its mean removed so the encoder starts
    /// out blind to the constant level of the input.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Stream::new(seed);
        Ok(Self::build(cfg, Some(&mut rng), seed))
    }

    /// All-zero tensors with the shapes `cfg` implies.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self::build(cfg, None, 0)
    }

    fn build(cfg: &ModelConfig, mut rng: Option<&mut Stream>, seed: u64) -> Self {
        let d = cfg.embed_dim;
        let unit = if rng.is_some() { F::one() } else { F::zero() };
        let mut convs = Vec::with_capacity(cfg.conv_channels.len());
        let mut cin = cfg.in_channels;
        for &cout in &cfg.conv_channels {
            let mut weight = Tensor::zeros(&[cout, cin, 3, 3]);
            if let Some(rng) = rng.as_deref_mut() {
                let bound = Float::sqrt(6.0 / (cin * 9) as f64);
                for w in &mut weight.data {
                    *w = F::lit(rng.uniform_in(-bound, bound));
                }
                if convs.is_empty() {
                    for kernel in weight.data.chunks_mut(9) {
                        let mean = kernel.iter().copied().sum::<F>() / F::lit(9.0);
                        kernel.iter_mut().for_each(|w| *w -= mean);
                    }
                }
            }
            convs.push(Conv {
                weight,
                bias: Tensor::zeros(&[cout]),
            });
            cin = cout;
        }
        let proj = linear(d, cin, rng.as_deref_mut());
        let mut class_token = Tensor::zeros(&[d]);
        if let Some(rng) = rng.as_deref_mut() {
            for v in &mut class_token.data {
                *v = F::lit(0.02 * rng.normal());
            }
        }
        let layers = (0..cfg.n_layers)
            .map(|_| EncoderLayer {
                norm1: layer_norm(d, unit),
                query: linear(d, d, rng.as_deref_mut()),
                key: linear(d, d, rng.as_deref_mut()),
                value: linear(d, d, rng.as_deref_mut()),
                out: linear(d, d, rng.as_deref_mut()),
                norm2: layer_norm(d, unit),
                ff1: linear(cfg.ffn_dim, d, rng.as_deref_mut()),
                ff2: linear(d, cfg.ffn_dim, rng.as_deref_mut()),
            })
            .collect();
        ModelParams {
            convs,
            proj,
            class_token,
            layers,
            final_norm: layer_norm(d, unit),
            head: linear(cfg.n_classes, d, rng),
            init_seed: seed,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = F::zero());
        }
        z
    }

    /// Tensors in a fixed canonical order, paired with their names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("encoder.conv{i}.weight"), &c.weight));
            out.push((format!("encoder.conv{i}.bias"), &c.bias));
        }
        push_linear(&mut out, "encoder.proj", &self.proj);
        out.push(("class_token".into(), &self.class_token));
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            push_norm(&mut out, &format!("{p}.norm1"), &l.norm1);
            push_linear(&mut out, &format!("{p}.attn.query"), &l.query);
            push_linear(&mut out, &format!("{p}.attn.key"), &l.key);
            push_linear(&mut out, &format!("{p}.attn.value"), &l.value);
            push_linear(&mut out, &format!("{p}.attn.out"), &l.out);
            push_norm(&mut out, &format!("{p}.norm2"), &l.norm2);
            push_linear(&mut out, &format!("{p}.ff1"), &l.ff1);
            push_linear(&mut out, &format!("{p}.ff2"), &l.ff2);
        }
        push_norm(&mut out, "final_norm", &self.final_norm);
        push_linear(&mut out, "head", &self.head);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out: Vec<&mut Tensor<F>> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.proj.weight);
        out.push(&mut self.proj.bias);
        out.push(&mut self.class_token);
        for l in &mut self.layers {
            out.push(&mut l.norm1.gamma);
            out.push(&mut l.norm1.beta);
            for lin in [&mut l.query, &mut l.key, &mut l.value, &mut l.out] {
                out.push(&mut lin.weight);
                out.push(&mut lin.bias);
            }
            out.push(&mut l.norm2.gamma);
            out.push(&mut l.norm2.beta);
            out.push(&mut l.ff1.weight);
            out.push(&mut l.ff1.bias);
            out.push(&mut l.ff2.weight);
            out.push(&mut l.ff2.bias);
        }
        out.push(&mut self.final_norm.gamma);
        out.push(&mut self.final_norm.beta);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams<F>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: F) {
        for t in self.tensors_mut() {
            t.scale(k);
        }
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named_tensors()
            .into_iter()
            .find(|(_, t)| t.data.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.first_non_finite() {
            Some(name) => Err(Error::Numeric(format!("{what} `{name}`"))),
            None => Ok(()),
        }
    }

    /// FNV-1a over the little-endian bytes of every value, as `f64`.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for t in self.tensors() {
            for v in &t.data {
                bytes.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        crate::rng::fnv1a(&bytes)
    }

    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        let conv = |c: &Conv<F>| Conv {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        let lin = |l: &Linear<F>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        let norm = |n: &LayerNorm<F>| LayerNorm {
            gamma: n.gamma.cast(),
            beta: n.beta.cast(),
        };
        ModelParams {
            convs: self.convs.iter().map(conv).collect(),
            proj: lin(&self.proj),
            class_token: self.class_token.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayer {
                    norm1: norm(&l.norm1),
                    query: lin(&l.query),
                    key: lin(&l.key),
                    value: lin(&l.value),
                    out: lin(&l.out),
                    norm2: norm(&l.norm2),
                    ff1: lin(&l.ff1),
                    ff2: lin(&l.ff2),
                })
                .collect(),
            final_norm: norm(&self.final_norm),
            head: lin(&self.head),
            init_seed: self.init_seed,
        }
    }

    /// Check tensor shapes against a configuration.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ModelParams::<F>::zeros(cfg);
        let ours = self.named_tensors();
        let theirs = expected.named_tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Shape(format!(
                "{} tensors, configuration implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((name, a), (_, b)) in ours.iter().zip(&theirs) {
            if a.dims != b.dims {
                return Err(Error::Shape(format!(
                    "`{name}` is {:?}, expected {:?}",
                    a.dims, b.dims
                )));
            }
        }
        Ok(())
    }
}

fn push_linear<'a, F>(out: &mut Vec<(String, &'a Tensor<F>)>, prefix: &str, l: &'a Linear<F>) {
    out.push((format!("{prefix}.weight"), &l.weight));
    out.push((format!("{prefix}.bias"), &l.bias));
}

fn push_norm<'a, F>(out: &mut Vec<(String, &'a Tensor<F>)>, prefix: &str, n: &'a LayerNorm<F>) {
    out.push((format!("{prefix}.gamma"), &n.gamma));
    out.push((format!("{prefix}.beta"), &n.beta));
}
