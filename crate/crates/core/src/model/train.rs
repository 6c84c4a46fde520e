//! Minibatch Adam training on soft or sharpened targets.

use crate::float::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::loss::{cross_entropy, cross_entropy_grad};
use super::network::{backward, forward};
use super::{Adam, ModelConfig, ModelParams, Real};
use crate::dataset::{sharpen, SoftLabel};
use crate::eval::{evaluate, Evaluation};
use crate::features::PatchSequence;
use crate::rng::{derive_seed, Stream};
use crate::{Error, Result};

/// One labelled clip ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub patches: PatchSequence,
    pub label: SoftLabel,
}

/// Random-access collection of examples.
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn example(&self, index: usize) -> Result<Example>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Examples held in memory.
#[derive(Debug, Clone, Default)]
pub struct VecSource(pub Vec<Example>);

impl ExampleSource for VecSource {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn example(&self, index: usize) -> Result<Example> {
        self.0
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Data(format!("example {index} out of range")))
    }
}

/// Evaluates independent jobs and returns their results in job order.
///
/// Implementations may run jobs concurrently; callers reduce the returned
/// vector sequentially, so results do not depend on scheduling.
pub trait GradientRunner: Sync {
    fn map<T: Send>(&self, n: usize, job: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        (0..n).map(job).collect()
    }
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl GradientRunner for Sequential {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    #[default]
    Soft,
    /// Train on the one-hot of each label's argmax.
    Hard,
}

impl LabelMode {
    pub fn target(self, label: &SoftLabel) -> SoftLabel {
        match self {
            LabelMode::Soft => *label,
            LabelMode::Hard => SoftLabel::one_hot(sharpen(label)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Batch gradients with a larger global L2 norm are rescaled to it; 0 disables.
    pub grad_clip_norm: f64,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub label_mode: LabelMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 5,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 1.0,
            shuffle_seed: 0,
            init_seed: 0,
            label_mode: LabelMode::Soft,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size and epochs must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::Config(
                "Adam betas must lie in [0, 1) and eps must be positive".into(),
            ));
        }
        if !(self.grad_clip_norm >= 0.0 && self.grad_clip_norm.is_finite()) {
            return Err(Error::Config(format!(
                "gradient clip norm {} must be finite and >= 0",
                self.grad_clip_norm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_weighted_f1: Option<f64>,
    /// Mean `KL(label || q)` over the validation split.
    pub val_kl: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<EpochLog>,
    pub validation: Option<Evaluation>,
}

/// Loss and parameter gradient of a single example, with `dL/dlogits = q - p`.
pub fn example_gradient<F: Real>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    example: &Example,
    mode: LabelMode,
) -> Result<(ModelParams<F>, f64)> {
    let target = mode.target(&example.label);
    let trace = forward(params, cfg, &example.patches)?;
    let loss = cross_entropy(&trace.logits, &target.probs).as_f64();
    let d_logits = cross_entropy_grad(&trace.logits, &target.probs);
    let mut grads = params.zeros_like();
    backward(params, cfg, &trace, &d_logits, &mut grads)?;
    Ok((grads, loss))
}

fn clip_gradients(grads: &mut ModelParams<f32>, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let sq: f64 = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|&g| f64::from(g) * f64::from(g))
        .sum();
    let norm = Float::sqrt(sq);
    if norm > max_norm {
        grads.scale((max_norm / norm) as f32);
    }
}

/// Train from `ModelParams::init(model_cfg, cfg.init_seed)`.
///
/// Each epoch visits the training examples in an order drawn from
/// `shuffle_seed` and the epoch number. Batch loss is the mean over the batch.
pub fn train<R: GradientRunner>(
    train_set: &dyn ExampleSource,
    val_set: Option<&dyn ExampleSource>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    runner: &R,
) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("training split is empty".into()));
    }
    let mut params = ModelParams::<f32>::init(model_cfg, cfg.init_seed)?;
    let mut opt = Adam::new(
        &params,
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut validation = None;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Stream::new(derive_seed(cfg.shuffle_seed, &[epoch as u64])).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let p = &params;
            let results = runner.map(batch.len(), &|k| {
                let ex = train_set.example(batch[k])?;
                example_gradient(p, model_cfg, &ex, cfg.label_mode)
            });
            let mut grads = params.zeros_like();
            for r in results {
                let (g, loss) = r?;
                grads.add_assign(&g);
                loss_sum += loss;
            }
            grads.scale(1.0 / batch.len() as f32);
            clip_gradients(&mut grads, cfg.grad_clip_norm);
            opt.step(&mut params, &grads);
            params.ensure_finite("parameters after update")?;
        }
        let mut entry = EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            val_weighted_f1: None,
            val_kl: None,
        };
        if let Some(val) = val_set.filter(|v| !v.is_empty()) {
            let ev = evaluate(&params, model_cfg, val, runner)?;
            entry.val_weighted_f1 = Some(ev.report.weighted_f1);
            entry.val_kl = Some(ev.mean_kl);
            validation = Some(ev);
        }
        log.push(entry);
    }
    Ok(TrainOutcome {
        params,
        log,
        validation,
    })
}
