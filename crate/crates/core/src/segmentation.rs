//! Drop detection on a smoothed loudness envelope and clip sampling.
//!
//! A drop is a run of frames whose smoothed RMS loudness stays at or above
//! `V_max - v_margin_db`, where `V_max` is the loudest smoothed frame of the
//! track. Runs separated by short dips are merged, and runs too short to hold
//! one clip are dropped.

use crate::float::Float;
use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::audio::{amplitude_to_db, AudioBuffer, AudioClip};
use crate::rng::{derive_seed, fnv1a, Stream};
use crate::{Error, Result};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub v_margin_db: f64,
    pub frame_len_s: f64,
    pub frame_hop_s: f64,
    pub smooth_window_s: f64,
    pub merge_gap_s: f64,
    pub clip_len_s: f64,
    pub max_clips_per_segment: usize,
    pub rng_seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            v_margin_db: 1.5,
            frame_len_s: 0.100,
            frame_hop_s: 0.025,
            smooth_window_s: 1.0,
            merge_gap_s: 0.5,
            clip_len_s: 7.5,
            max_clips_per_segment: 8,
            rng_seed: 0,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("frame_len_s", self.frame_len_s),
            ("frame_hop_s", self.frame_hop_s),
            ("smooth_window_s", self.smooth_window_s),
            ("merge_gap_s", self.merge_gap_s),
            ("clip_len_s", self.clip_len_s),
            ("v_margin_db", self.v_margin_db),
        ];
        for (name, v) in durations {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.frame_len_s < self.frame_hop_s {
            return Err(Error::Config(
                "frame_len_s must be at least frame_hop_s".into(),
            ));
        }
        if self.max_clips_per_segment == 0 {
            return Err(Error::Config(
                "max_clips_per_segment must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Odd moving-average width in frames.
    pub fn smooth_frames(&self) -> usize {
        let w = (Float::floor(self.smooth_window_s / self.frame_hop_s + TIME_EPS) as usize).max(1);
        if w.is_multiple_of(2) {
            w + 1
        } else {
            w
        }
    }
}

/// Per-frame RMS loudness in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct LoudnessEnvelope {
    pub values_db: Vec<f64>,
    pub frame_hop_s: f64,
    pub frame_len_s: f64,
}

impl LoudnessEnvelope {
    pub fn len(&self) -> usize {
        self.values_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_db.is_empty()
    }

    pub fn max_db(&self) -> f64 {
        self.values_db
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropSegment {
    pub start_s: f64,
    pub end_s: f64,
}

impl DropSegment {
    pub fn len_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Frame `i` covers `[round(i * hop), round(i * hop) + frame_len)` samples; a
/// final partially filled frame is zero padded.
pub fn loudness_envelope(
    audio: &AudioBuffer,
    cfg: &SegmentationConfig,
) -> Result<LoudnessEnvelope> {
    cfg.validate()?;
    let sr = f64::from(audio.sample_rate);
    let frame_len = Float::round(cfg.frame_len_s * sr) as usize;
    let hop = cfg.frame_hop_s * sr;
    let n = audio.samples.len();
    if frame_len == 0 || n < frame_len {
        return Err(Error::EmptyAudio(format!(
            "`{}` is shorter than one {:.3}s loudness frame",
            audio.source_id, cfg.frame_len_s
        )));
    }
    let start_of = |i: usize| Float::round(i as f64 * hop) as usize;
    let mut values_db = Vec::new();
    let mut i = 0;
    loop {
        let start = start_of(i);
        if start >= n {
            break;
        }
        let end = (start + frame_len).min(n);
        let energy: f64 = audio.samples[start..end]
            .iter()
            .map(|&s| f64::from(s) * f64::from(s))
            .sum();
        values_db.push(amplitude_to_db(Float::sqrt(energy / frame_len as f64)));
        if start + frame_len >= n {
            break;
        }
        i += 1;
    }
    Ok(LoudnessEnvelope {
        values_db,
        frame_hop_s: cfg.frame_hop_s,
        frame_len_s: cfg.frame_len_s,
    })
}

/// Centered moving average; windows shrink at the edges.
pub fn smooth_envelope(env: &LoudnessEnvelope, cfg: &SegmentationConfig) -> LoudnessEnvelope {
    let half = cfg.smooth_frames() / 2;
    let v = &env.values_db;
    let n = v.len();
    let values_db = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    LoudnessEnvelope {
        values_db,
        frame_hop_s: env.frame_hop_s,
        frame_len_s: env.frame_len_s,
    }
}

/// `(V_max, V_thres)` of a smoothed envelope.
pub fn drop_threshold(env: &LoudnessEnvelope, cfg: &SegmentationConfig) -> (f64, f64) {
    let v_max = env.max_db();
    (v_max, v_max - cfg.v_margin_db)
}

/// Frame runs `[first, last_exclusive)` at or above the drop threshold, merged
/// across short gaps and filtered by minimum length.
pub fn detect_drop_frames(env: &LoudnessEnvelope, cfg: &SegmentationConfig) -> Vec<(usize, usize)> {
    if env.is_empty() {
        return Vec::new();
    }
    let (_, thres) = drop_threshold(env, cfg);
    let hop = env.frame_hop_s;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in env.values_db.iter().enumerate() {
        match (v >= thres, open) {
            (true, None) => open = Some(i),
            (false, Some(a)) => {
                runs.push((a, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(a) = open {
        runs.push((a, env.len()));
    }
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(last) if ((run.0 - last.1) as f64) * hop < cfg.merge_gap_s - TIME_EPS => {
                last.1 = run.1
            }
            _ => merged.push(run),
        }
    }
    merged.retain(|&(a, b)| ((b - a) as f64) * hop >= cfg.clip_len_s - TIME_EPS);
    merged
}

/// Drop segments of a smoothed envelope, sorted by start time.
pub fn detect_drops(env: &LoudnessEnvelope, cfg: &SegmentationConfig) -> Vec<DropSegment> {
    detect_drop_frames(env, cfg)
        .into_iter()
        .map(|(a, b)| DropSegment {
            start_s: a as f64 * env.frame_hop_s,
            end_s: b as f64 * env.frame_hop_s,
        })
        .collect()
}

/// Number of clips drawn from a segment of the given length.
pub fn clips_for_segment(len_s: f64, cfg: &SegmentationConfig) -> usize {
    let fits = Float::floor(len_s / cfg.clip_len_s + TIME_EPS) as usize;
    cfg.max_clips_per_segment.min(fits + 1)
}

/// A sampled clip and the segment it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledClip {
    pub clip: AudioClip,
    pub segment_index: usize,
    pub clip_index: usize,
}

impl SampledClip {
    pub fn clip_id(&self) -> alloc::string::String {
        format!(
            "{}_s{:02}_c{:02}",
            self.clip.buffer.source_id, self.segment_index, self.clip_index
        )
    }
}

/// Draw clip starts uniformly (on the sample grid) inside every segment.
///
/// Each segment gets its own stream seeded from `(rng_seed, source_id,
/// segment index)`, so results do not depend on which other segments exist.
pub fn sample_clips(
    audio: &AudioBuffer,
    segments: &[DropSegment],
    cfg: &SegmentationConfig,
) -> Result<Vec<SampledClip>> {
    cfg.validate()?;
    let sr = f64::from(audio.sample_rate);
    let clip_samples = Float::round(cfg.clip_len_s * sr) as usize;
    let source_hash = fnv1a(audio.source_id.as_bytes());
    let mut out = Vec::new();
    for (si, seg) in segments.iter().enumerate() {
        if seg.len_s() < cfg.clip_len_s - TIME_EPS {
            return Err(Error::Invariant(format!(
                "segment {si} of `{}` is {:.3}s, shorter than the {:.3}s clip length",
                audio.source_id,
                seg.len_s(),
                cfg.clip_len_s
            )));
        }
        let lo = Float::round(seg.start_s * sr) as usize;
        let end = (Float::round(seg.end_s * sr) as usize).min(audio.samples.len());
        if end < lo + clip_samples {
            return Err(Error::Invariant(format!(
                "segment {si} of `{}` extends past the end of the audio",
                audio.source_id
            )));
        }
        let span = end - clip_samples - lo;
        let mut stream = Stream::new(derive_seed(cfg.rng_seed, &[source_hash, si as u64]));
        for ci in 0..clips_for_segment(seg.len_s(), cfg) {
            let start = lo + stream.below(span + 1);
            let clip = AudioClip {
                buffer: AudioBuffer {
                    samples: audio.samples[start..start + clip_samples].to_vec(),
                    sample_rate: audio.sample_rate,
                    source_id: audio.source_id.clone(),
                },
                start_s: start as f64 / sr,
                duration_s: clip_samples as f64 / sr,
            };
            out.push(SampledClip {
                clip,
                segment_index: si,
                clip_index: ci,
            });
        }
    }
    Ok(out)
}

/// Envelope, smoothing and detection in one call. Returns the smoothed envelope too.
pub fn analyze(
    audio: &AudioBuffer,
    cfg: &SegmentationConfig,
) -> Result<(LoudnessEnvelope, Vec<DropSegment>)> {
    let env = smooth_envelope(&loudness_envelope(audio, cfg)?, cfg);
    let segments = detect_drops(&env, cfg);
    Ok((env, segments))
}
