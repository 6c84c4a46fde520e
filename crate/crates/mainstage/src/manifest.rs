//! JSON-lines manifests, track-level splits and manifest-backed example sources.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mainstage_core::dataset::{sharpen, validate_records, ClipRecord, Genre, SoftLabel, Split};
use mainstage_core::features::{patchify, FeatureConfig};
use mainstage_core::model::{Example, ExampleSource};
use mainstage_core::rng::{derive_seed, Stream};
use mainstage_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::files::{read_bytes, read_features, write_bytes, StoredFeatures};

pub fn read_manifest(path: &Path) -> AppResult<Vec<ClipRecord>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| AppError::parse(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| AppError::parse(path, format!("line {}: {e}", n + 1)))
        })
        .collect()
}

pub fn write_manifest(path: &Path, records: &[ClipRecord]) -> AppResult<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| AppError::parse(path, e))?);
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Resolve a record's feature path against the manifest's directory.
pub fn feature_file(root: &Path, record: &ClipRecord) -> PathBuf {
    let p = Path::new(&record.feature_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Validate records, confirm every feature file exists, and write the manifest.
pub fn build_manifest(path: &Path, records: &[ClipRecord]) -> AppResult<()> {
    validate_records(records)?;
    let root = path.parent().unwrap_or(Path::new(""));
    if let Some(r) = records.iter().find(|r| !feature_file(root, r).is_file()) {
        return Err(Error::Data(format!(
            "feature file {} for clip `{}` does not exist",
            feature_file(root, r).display(),
            r.clip_id
        ))
        .into());
    }
    write_manifest(path, records)
}

/// One sampled clip, as written by the `clips` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEntry {
    pub clip_id: String,
    pub source_id: String,
    pub start_s: f64,
    pub duration_s: f64,
    pub segment_index: usize,
    pub sample_rate: u32,
}

/// Label file entry: a genre name or an explicit eight-way distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelSpec {
    Genre(String),
    Probs(SoftLabel),
}

impl LabelSpec {
    pub fn resolve(&self) -> mainstage_core::Result<SoftLabel> {
        match self {
            LabelSpec::Genre(name) => Genre::parse(name)
                .map(SoftLabel::one_hot)
                .ok_or_else(|| Error::InvalidLabel(format!("unknown genre `{name}`"))),
            LabelSpec::Probs(p) => {
                p.validate()?;
                Ok(*p)
            }
        }
    }
}

/// Assign whole tracks to splits, stratified by sharpened genre.
///
/// Within each genre the tracks are sorted, shuffled with a stream derived
/// from `seed` and the genre index, and the first `round(n * val_fraction)`
/// go to validation.
pub fn assign_splits(
    labels: &BTreeMap<String, SoftLabel>,
    val_fraction: f64,
    seed: u64,
) -> BTreeMap<String, Split> {
    let mut by_genre: BTreeMap<Genre, Vec<&String>> = BTreeMap::new();
    for (src, label) in labels {
        by_genre.entry(sharpen(label)).or_default().push(src);
    }
    let mut out = BTreeMap::new();
    for (genre, mut tracks) in by_genre {
        Stream::new(derive_seed(seed, &[genre.index() as u64])).shuffle(&mut tracks);
        let n_val = (tracks.len() as f64 * val_fraction).round() as usize;
        for (i, src) in tracks.into_iter().enumerate() {
            out.insert(
                src.clone(),
                if i < n_val { Split::Val } else { Split::Train },
            );
        }
    }
    out
}

/// Manifest rows of one split, loaded lazily from their feature files.
pub struct ManifestSource {
    pub records: Vec<ClipRecord>,
    root: PathBuf,
    features: FeatureConfig,
}

impl ManifestSource {
    pub fn new(records: Vec<ClipRecord>, root: &Path, features: FeatureConfig) -> Self {
        ManifestSource {
            records,
            root: root.to_path_buf(),
            features,
        }
    }

    /// Rows of `split` (all rows for `None`) from the manifest at `path`.
    pub fn open(path: &Path, split: Option<Split>, features: FeatureConfig) -> AppResult<Self> {
        let records = read_manifest(path)?;
        validate_records(&records)?;
        let records = records
            .into_iter()
            .filter(|r| split.is_none_or(|s| r.split == s))
            .collect();
        Ok(Self::new(
            records,
            path.parent().unwrap_or(Path::new("")),
            features,
        ))
    }

    fn load(&self, index: usize) -> AppResult<Example> {
        let r = &self.records[index];
        let path = feature_file(&self.root, r);
        if !path.is_file() {
            return Err(Error::Data(format!("feature file {} is missing", path.display())).into());
        }
        let patches = match read_features(&path)? {
            StoredFeatures::Patches(p) => p,
            StoredFeatures::Stack(s) => patchify(&s, &self.features),
        };
        Ok(Example {
            id: r.clip_id.clone(),
            patches,
            label: r.label,
        })
    }
}

impl ExampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn example(&self, index: usize) -> mainstage_core::Result<Example> {
        self.load(index).map_err(|e| match e {
            AppError::Core(c) => c,
            other => Error::Data(other.to_string()),
        })
    }
}
