//! WAVE, tensor, JSON and CSV files.

use std::fs;
use std::path::Path;

use mainstage_core::audio::{decode_wav, encode_wav, AudioBuffer, SampleFormat};
use mainstage_core::features::{FeatureStack, PatchSequence, FEATURE_CHANNELS, FEATURE_ROWS};
use mainstage_core::msf::{self, RawTensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, AppResult};

pub fn read_bytes(path: &Path) -> AppResult<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

/// File stem used as the track identifier.
pub fn source_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "track".to_string())
}

pub fn read_wav(path: &Path) -> AppResult<AudioBuffer> {
    Ok(decode_wav(&read_bytes(path)?, &source_id(path))?)
}

pub fn write_wav(path: &Path, audio: &AudioBuffer, format: SampleFormat) -> AppResult<()> {
    write_bytes(path, &encode_wav(audio, format))
}

pub fn read_tensor(path: &Path) -> AppResult<RawTensor> {
    Ok(msf::decode(&read_bytes(path)?)?)
}

pub fn write_tensor(path: &Path, dims: &[usize], data: &[f32]) -> AppResult<()> {
    write_bytes(path, &msf::encode(dims, data)?)
}

/// A stored clip feature: a `3 x 224 x T` stack or an `M x 3 x 224 x 224` patch run.
pub enum StoredFeatures {
    Stack(FeatureStack),
    Patches(PatchSequence),
}

pub fn read_features(path: &Path) -> AppResult<StoredFeatures> {
    let t = read_tensor(path)?;
    match t.dims.as_slice() {
        &[c, r, cols] if c == FEATURE_CHANNELS && r == FEATURE_ROWS => {
            Ok(StoredFeatures::Stack(FeatureStack {
                data: t.data,
                cols,
                frame_hop_samples: 0,
            }))
        }
        &[m, c, h, w] => Ok(StoredFeatures::Patches(PatchSequence::new(
            t.data, m, c, h, w,
        )?)),
        dims => Err(AppError::parse(
            path,
            format!("expected a 3x224xT stack or MxCxHxW patches, found dims {dims:?}"),
        )),
    }
}

pub fn write_patches(path: &Path, patches: &PatchSequence) -> AppResult<()> {
    write_tensor(
        path,
        &[
            patches.count,
            patches.channels,
            patches.height,
            patches.width,
        ],
        &patches.data,
    )
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    serde_json::from_slice(&read_bytes(path)?).map_err(|e| AppError::parse(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::parse(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Rows of `id,label,values...` with a header.
pub fn write_csv(
    path: &Path,
    header: &[String],
    rows: &[(String, String, Vec<f64>)],
) -> AppResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for (id, label, values) in rows {
        out.push_str(id);
        out.push(',');
        out.push_str(label);
        for v in values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_csv(path: &Path) -> AppResult<Vec<(String, String, Vec<f64>)>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|e| AppError::parse(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let (Some(id), Some(label)) = (cells.next(), cells.next()) else {
            return Err(AppError::parse(
                path,
                format!("line {}: too few columns", n + 1),
            ));
        };
        let values = cells
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AppError::parse(path, format!("line {}: {e}", n + 1)))?;
        rows.push((id.to_string(), label.to_string(), values));
    }
    Ok(rows)
}
