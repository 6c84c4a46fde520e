//! Library entry points behind each subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mainstage_core::audio::{AudioBuffer, AudioClip};
use mainstage_core::cuesheet::{cuesheet, CueConfig, CueSheet, ModelClassifier, PresetMap};
use mainstage_core::dataset::{ClipRecord, SoftLabel};
use mainstage_core::eval::{evaluate, extract_embeddings, EmbeddingSet, Evaluation};
use mainstage_core::features::{extract_patches, FeatureConfig};
use mainstage_core::model::{
    train, ExampleSource, GradientRunner, ModelConfig, TrainConfig, TrainOutcome,
};
use mainstage_core::segmentation::{analyze, drop_threshold, sample_clips, SegmentationConfig};
use mainstage_core::Error;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::AppResult;
use crate::files::{write_json, write_patches};
use crate::manifest::{assign_splits, ClipEntry, ManifestSource};

/// Feature configuration written next to extracted features.
pub const FEATURES_SIDECAR: &str = "features.json";

/// One detected drop, as written by `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub v_max_db: f64,
    pub v_thres_db: f64,
}

pub fn analyze_track(
    audio: &AudioBuffer,
    cfg: &SegmentationConfig,
) -> AppResult<Vec<SegmentReport>> {
    cfg.validate()?;
    let (env, segments) = analyze(audio, cfg)?;
    let (v_max, v_thres) = drop_threshold(&env, cfg);
    Ok(segments
        .into_iter()
        .map(|s| SegmentReport {
            source_id: audio.source_id.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            v_max_db: v_max,
            v_thres_db: v_thres,
        })
        .collect())
}

/// Detect drops and draw clips from them.
pub fn track_clips(
    audio: &AudioBuffer,
    cfg: &SegmentationConfig,
) -> AppResult<Vec<(ClipEntry, AudioClip)>> {
    cfg.validate()?;
    let (_, segments) = analyze(audio, cfg)?;
    Ok(sample_clips(audio, &segments, cfg)?
        .into_iter()
        .map(|c| {
            let entry = ClipEntry {
                clip_id: c.clip_id(),
                source_id: audio.source_id.clone(),
                start_s: c.clip.start_s,
                duration_s: c.clip.duration_s,
                segment_index: c.segment_index,
                sample_rate: audio.sample_rate,
            };
            (entry, c.clip)
        })
        .collect())
}

/// Cut the listed clips back out of their track.
pub fn cut_clips(
    audio: &AudioBuffer,
    entries: &[ClipEntry],
) -> AppResult<Vec<(String, AudioClip)>> {
    entries
        .iter()
        .filter(|e| e.source_id == audio.source_id)
        .map(|e| Ok((e.clip_id.clone(), audio.clip(e.start_s, e.duration_s)?)))
        .collect()
}

/// Extract patch tensors for every clip into `out_dir/<clip_id>.msf`.
pub fn extract_to_dir<R: GradientRunner>(
    clips: &[(String, AudioClip)],
    cfg: &FeatureConfig,
    out_dir: &Path,
    runner: &R,
) -> AppResult<Vec<PathBuf>> {
    let results = runner.map(clips.len(), &|i| -> AppResult<PathBuf> {
        let (id, clip) = &clips[i];
        let patches = extract_patches(clip, cfg)?;
        let path = out_dir.join(format!("{id}.msf"));
        write_patches(&path, &patches)?;
        Ok(path)
    });
    let paths = results.into_iter().collect::<AppResult<Vec<_>>>()?;
    write_json(&out_dir.join(FEATURES_SIDECAR), cfg)?;
    Ok(paths)
}

/// Turn sampled clips and per-track labels into manifest rows.
///
/// Tracks are split as a whole; `feature_dir` is stored verbatim as the
/// directory part of every feature path.
pub fn dataset_records(
    entries: &[ClipEntry],
    labels: &BTreeMap<String, SoftLabel>,
    feature_dir: &str,
    val_fraction: f64,
    seed: u64,
) -> AppResult<Vec<ClipRecord>> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val fraction {val_fraction} outside [0, 1)")).into());
    }
    let used: BTreeMap<String, SoftLabel> = entries
        .iter()
        .map(|e| {
            labels
                .get(&e.source_id)
                .map(|l| (e.source_id.clone(), *l))
                .ok_or_else(|| Error::InvalidLabel(format!("no label for track `{}`", e.source_id)))
        })
        .collect::<Result<_, _>>()?;
    let splits = assign_splits(&used, val_fraction, seed);
    let dir = feature_dir.trim_end_matches('/');
    Ok(entries
        .iter()
        .map(|e| ClipRecord {
            clip_id: e.clip_id.clone(),
            source_id: e.source_id.clone(),
            start_s: e.start_s,
            label: used[&e.source_id],
            split: splits[&e.source_id],
            feature_path: if dir.is_empty() {
                format!("{}.msf", e.clip_id)
            } else {
                format!("{dir}/{}.msf", e.clip_id)
            },
            sample_rate: e.sample_rate,
        })
        .collect())
}

pub fn train_model<R: GradientRunner>(
    train_set: &ManifestSource,
    val_set: Option<&ManifestSource>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    runner: &R,
) -> AppResult<TrainOutcome> {
    let val = val_set.map(|v| v as &dyn ExampleSource);
    Ok(train(train_set, val, model, cfg, runner)?)
}

pub fn evaluate_checkpoint<R: GradientRunner>(
    ckpt: &Checkpoint,
    source: &ManifestSource,
    runner: &R,
) -> AppResult<Evaluation> {
    Ok(evaluate(&ckpt.params, &ckpt.meta.model, source, runner)?)
}

pub fn embed_checkpoint<R: GradientRunner>(
    ckpt: &Checkpoint,
    source: &ManifestSource,
    runner: &R,
) -> AppResult<EmbeddingSet> {
    Ok(extract_embeddings(
        &ckpt.params,
        &ckpt.meta.model,
        source,
        runner,
    )?)
}

pub fn cuesheet_for<R: GradientRunner>(
    track: &AudioBuffer,
    ckpt: &Checkpoint,
    cfg: &CueConfig,
    presets: &PresetMap,
    runner: &R,
) -> AppResult<CueSheet> {
    let classifier = ModelClassifier {
        params: &ckpt.params,
        model: &ckpt.meta.model,
        features: &ckpt.meta.features,
    };
    Ok(cuesheet(track, &classifier, cfg, presets, runner)?)
}
