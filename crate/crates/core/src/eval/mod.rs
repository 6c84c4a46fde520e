//! Validation metrics, pre-head embeddings and their PCA projection.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::{sharpen, Genre, N_GENRES};
use crate::model::{
    kl_divergence, predict, ExampleSource, GradientRunner, ModelConfig, ModelParams, Real,
};
use crate::{Error, Result};

mod metrics;
mod pca;

pub use metrics::{Confusion, EvalReport, GenreMetrics};
pub use pca::{pca_project, Pca, PCA_MAX_ITERATIONS, PCA_TOLERANCE, RANK_EPS};

/// Model output for one validation clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub truth: Genre,
    pub predicted: Genre,
    pub probs: [f64; N_GENRES],
    /// `KL(label || q)`
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    /// Mean `KL(label || q)` over the clips.
    pub mean_kl: f64,
    pub predictions: Vec<ClipPrediction>,
}

/// Clip-level evaluation: prediction is `argmax q`, truth is the sharpened label.
pub fn evaluate<F: Real, R: GradientRunner>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    source: &dyn ExampleSource,
    runner: &R,
) -> Result<Evaluation> {
    if source.is_empty() {
        return Err(Error::EmptySplit("validation split is empty".into()));
    }
    let results = runner.map(source.len(), &|i| {
        let ex = source.example(i)?;
        let pred = predict(params, cfg, &ex.patches)?;
        Ok::<_, Error>(ClipPrediction {
            truth: sharpen(&ex.label),
            predicted: pred.genre(),
            kl: kl_divergence(&ex.label.probs, &pred.probs),
            probs: pred.probs,
            clip_id: ex.id,
        })
    });
    let predictions = results.into_iter().collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(Genre, Genre)> = predictions.iter().map(|p| (p.truth, p.predicted)).collect();
    let mut kls: Vec<f64> = predictions.iter().map(|p| p.kl).collect();
    kls.sort_by(f64::total_cmp);
    let mean_kl = kls.iter().sum::<f64>() / kls.len() as f64;
    Ok(Evaluation {
        report: EvalReport::from_pairs(&pairs),
        mean_kl,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub clip_id: String,
    pub embedding: Vec<f64>,
    pub truth: Genre,
}

/// Pre-head embeddings of a set of clips, all of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingSet {
    pub fn new(rows: Vec<EmbeddingRow>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.embedding.len());
        if let Some(bad) = rows.iter().find(|r| r.embedding.len() != dim) {
            return Err(Error::Shape(format!(
                "embedding of {} has {} values, expected {dim}",
                bad.clip_id,
                bad.embedding.len()
            )));
        }
        if let Some(bad) = rows
            .iter()
            .find(|r| r.embedding.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric(format!(
                "non-finite embedding for {}",
                bad.clip_id
            )));
        }
        Ok(EmbeddingSet { dim, rows })
    }

    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.embedding.clone()).collect()
    }

    pub fn project(&self, k: usize) -> Result<Pca> {
        pca_project(&self.vectors(), k)
    }
}

pub fn extract_embeddings<F: Real, R: GradientRunner>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    source: &dyn ExampleSource,
    runner: &R,
) -> Result<EmbeddingSet> {
    let rows = runner.map(source.len(), &|i| {
        let ex = source.example(i)?;
        let pred = predict(params, cfg, &ex.patches)?;
        Ok::<_, Error>(EmbeddingRow {
            clip_id: ex.id,
            embedding: pred.embedding,
            truth: sharpen(&ex.label),
        })
    });
    EmbeddingSet::new(rows.into_iter().collect::<Result<Vec<_>>>()?)
}
