//! Genre timelines for rule-based visual automation.
//!
//! A track is cut into fixed analysis windows, each window is classified, and
//! runs of windows sharing a label become one cue event.

use crate::float::Float;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, AudioClip};
use crate::dataset::{argmax, Genre, N_GENRES};
use crate::features::{extract_patches, FeatureConfig};
use crate::model::{predict, GradientRunner, ModelConfig, ModelParams};
use crate::{Error, Result};

/// Anything that maps an audio window to a genre distribution.
pub trait GenreClassifier: Sync {
    fn classify(&self, clip: &AudioClip) -> Result<[f64; N_GENRES]>;
}

/// Feature extraction followed by the trained network.
pub struct ModelClassifier<'a> {
    pub params: &'a ModelParams<f32>,
    pub model: &'a ModelConfig,
    pub features: &'a FeatureConfig,
}

impl GenreClassifier for ModelClassifier<'_> {
    fn classify(&self, clip: &AudioClip) -> Result<[f64; N_GENRES]> {
        let patches = extract_patches(clip, self.features)?;
        Ok(predict(self.params, self.model, &patches)?.probs)
    }
}

/// Genre to visual preset identifier; defaults to the genre slug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresetMap(BTreeMap<Genre, String>);

impl Default for PresetMap {
    fn default() -> Self {
        PresetMap(
            Genre::ALL
                .iter()
                .map(|&g| (g, g.slug().to_string()))
                .collect(),
        )
    }
}

impl PresetMap {
    /// Start from the defaults and override the given genres.
    pub fn with_overrides(overrides: impl IntoIterator<Item = (Genre, String)>) -> Self {
        let mut map = PresetMap::default();
        for (g, p) in overrides {
            map.0.insert(g, p);
        }
        map
    }

    pub fn preset(&self, genre: Genre) -> &str {
        self.0
            .get(&genre)
            .map_or_else(|| genre.slug(), String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub genre: Genre,
    pub confidence: f64,
    pub distribution: [f64; N_GENRES],
    pub preset_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueSheet {
    pub source_id: String,
    pub events: Vec<CueEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueConfig {
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig {
            window_s: 7.5,
            hop_s: 7.5,
        }
    }
}

/// One classified analysis window covering `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowLabel {
    pub start_s: f64,
    pub end_s: f64,
    pub distribution: [f64; N_GENRES],
}

/// Start sample of every complete window, and the window length in samples.
pub fn window_starts(track: &AudioBuffer, cfg: &CueConfig) -> Result<(Vec<usize>, usize)> {
    if !(cfg.window_s > 0.0 && cfg.hop_s > 0.0) || cfg.hop_s > cfg.window_s {
        return Err(Error::Config(format!(
            "cue windows need 0 < hop ({}) <= window ({})",
            cfg.hop_s, cfg.window_s
        )));
    }
    let sr = f64::from(track.sample_rate);
    let len = Float::round(cfg.window_s * sr) as usize;
    if len == 0 || track.len() < len {
        return Err(Error::Data(format!(
            "track `{}` ({:.2} s) is shorter than one {} s window",
            track.source_id,
            track.duration_s(),
            cfg.window_s
        )));
    }
    let starts = (0..)
        .map(|i| Float::round(i as f64 * cfg.hop_s * sr) as usize)
        .take_while(|&s| s + len <= track.len())
        .collect();
    Ok((starts, len))
}

/// Fold windows in order; adjacent windows with the same argmax merge.
///
/// Each window owns the span up to the next window's start (the last one owns
/// its full extent), so the events tile the analyzed span.
pub fn merge_windows(windows: &[WindowLabel], presets: &PresetMap) -> Vec<CueEvent> {
    let mut events: Vec<CueEvent> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let flush = |events: &mut Vec<CueEvent>, members: &mut Vec<usize>, end_s: f64| {
        if members.is_empty() {
            return;
        }
        let mut mean = [0.0; N_GENRES];
        for &i in members.iter() {
            for (m, p) in mean.iter_mut().zip(&windows[i].distribution) {
                *m += p;
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        let genre = Genre::ALL[argmax(&windows[members[0]].distribution)];
        events.push(CueEvent {
            start_s: windows[members[0]].start_s,
            end_s,
            genre,
            confidence: mean.iter().copied().fold(0.0, f64::max),
            distribution: mean,
            preset_id: presets.preset(genre).to_string(),
        });
        members.clear();
    };
    for (i, w) in windows.iter().enumerate() {
        let label = argmax(&w.distribution);
        if let Some(&first) = members.first() {
            if argmax(&windows[first].distribution) != label {
                flush(&mut events, &mut members, w.start_s);
            }
        }
        members.push(i);
    }
    if let Some(last) = windows.last() {
        flush(&mut events, &mut members, last.end_s);
    }
    events
}

/// Classify every window of `track` and merge the labels into events.
pub fn cuesheet<C: GenreClassifier, R: GradientRunner>(
    track: &AudioBuffer,
    classifier: &C,
    cfg: &CueConfig,
    presets: &PresetMap,
    runner: &R,
) -> Result<CueSheet> {
    let (starts, len) = window_starts(track, cfg)?;
    let sr = f64::from(track.sample_rate);
    let results = runner.map(starts.len(), &|i| {
        let s = starts[i];
        let clip = AudioClip {
            buffer: AudioBuffer {
                samples: track.samples[s..s + len].to_vec(),
                sample_rate: track.sample_rate,
                source_id: track.source_id.clone(),
            },
            start_s: s as f64 / sr,
            duration_s: len as f64 / sr,
        };
        let distribution = classifier.classify(&clip)?;
        if distribution.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite distribution for window at {:.2} s",
                clip.start_s
            )));
        }
        Ok(WindowLabel {
            start_s: clip.start_s,
            end_s: (s + len) as f64 / sr,
            distribution,
        })
    });
    let windows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CueSheet {
        source_id: track.source_id.clone(),
        events: merge_windows(&windows, presets),
    })
}
