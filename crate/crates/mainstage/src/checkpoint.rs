//! Model checkpoints: one tensor file per parameter plus a JSON sidecar.

use std::fs;
use std::path::Path;

use mainstage_core::features::FeatureConfig;
use mainstage_core::model::{ModelConfig, ModelParams, TrainConfig};
use mainstage_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::files::{read_json, read_tensor, write_json, write_tensor};

pub const SIDECAR: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub init_seed: u64,
    /// FNV-1a over the parameter values, for quick comparisons.
    pub checksum: u64,
    pub tensors: Vec<String>,
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ModelParams<f32>,
}

pub fn save(
    dir: &Path,
    params: &ModelParams<f32>,
    model: &ModelConfig,
    features: &FeatureConfig,
    train: &TrainConfig,
) -> AppResult<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let named = params.named_tensors();
    for (name, t) in &named {
        write_tensor(&dir.join(format!("{name}.msf")), &t.dims, &t.data)?;
    }
    let meta = CheckpointMeta {
        model: model.clone(),
        features: features.clone(),
        train: train.clone(),
        init_seed: params.init_seed,
        checksum: params.checksum(),
        tensors: named.into_iter().map(|(n, _)| n).collect(),
    };
    write_json(&dir.join(SIDECAR), &meta)
}

pub fn load(dir: &Path) -> AppResult<Checkpoint> {
    let meta: CheckpointMeta = read_json(&dir.join(SIDECAR))?;
    meta.model.validate()?;
    let mut params = ModelParams::<f32>::zeros(&meta.model);
    params.init_seed = meta.init_seed;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    if names != meta.tensors {
        return Err(Error::Shape(format!(
            "checkpoint {} lists tensors that do not match its model config",
            dir.display()
        ))
        .into());
    }
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let path = dir.join(format!("{name}.msf"));
        let t = read_tensor(&path)?;
        if t.dims != slot.dims {
            return Err(Error::Shape(format!(
                "{}: dims {:?}, expected {:?}",
                path.display(),
                t.dims,
                slot.dims
            ))
            .into());
        }
        slot.data = t.data;
    }
    params.ensure_finite("checkpoint parameters")?;
    if params.checksum() != meta.checksum {
        return Err(Error::Data(format!("{}: parameter checksum mismatch", dir.display())).into());
    }
    Ok(Checkpoint { meta, params })
}
