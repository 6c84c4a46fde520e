use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{Chromagram, FeatureConfig, Scale, Spectrogram};
use crate::audio::amplitude_to_db;
use crate::{Error, Result};

/// Rows of every feature channel and side length of a square patch.
pub const FEATURE_ROWS: usize = 224;
/// Channel order: mel, CQT chroma, VQT chroma.
pub const FEATURE_CHANNELS: usize = 3;

/// `3 x 224 x T` feature matrix with every channel scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub data: Vec<f32>,
    pub cols: usize,
    pub frame_hop_samples: usize,
}

impl FeatureStack {
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * FEATURE_ROWS + row) * self.cols + col]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let plane = FEATURE_ROWS * self.cols;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

/// Linear interpolation of row index from `src_rows` to `dst_rows` rows.
///
/// Destination row `r` reads source position `r * (src_rows - 1) / (dst_rows - 1)`.
pub fn resample_rows(src: &[f64], src_rows: usize, cols: usize, dst_rows: usize) -> Vec<f64> {
    assert_eq!(src.len(), src_rows * cols);
    let mut out = vec![0.0; dst_rows * cols];
    for r in 0..dst_rows {
        let pos = if dst_rows > 1 && src_rows > 1 {
            (r * (src_rows - 1)) as f64 / (dst_rows - 1) as f64
        } else {
            0.0
        };
        let i0 = (Float::floor(pos) as usize).min(src_rows - 1);
        let i1 = (i0 + 1).min(src_rows - 1);
        let frac = pos - i0 as f64;
        let dst = &mut out[r * cols..(r + 1) * cols];
        let (a, b) = (
            &src[i0 * cols..(i0 + 1) * cols],
            &src[i1 * cols..(i1 + 1) * cols],
        );
        for c in 0..cols {
            dst[c] = if frac == 0.0 {
                a[c]
            } else {
                a[c] * (1.0 - frac) + b[c] * frac
            };
        }
    }
    out
}

fn min_max_into(values: &[f64], out: &mut [f32]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for (o, &v) in out.iter_mut().zip(values) {
        *o = if range > 0.0 {
            ((v - lo) / range) as f32
        } else {
            0.0
        };
    }
}

/// Stack dB mel, CQT chroma and VQT chroma into one normalized matrix.
pub fn stack_features(
    mel: &Spectrogram,
    cqt: &Chromagram,
    vqt: &Chromagram,
    _cfg: &FeatureConfig,
) -> Result<FeatureStack> {
    let cols = mel.cols;
    if cqt.cols != cols || vqt.cols != cols {
        return Err(Error::Shape(format!(
            "frame counts differ: mel {cols}, cqt {}, vqt {}",
            cqt.cols, vqt.cols
        )));
    }
    if mel.frame_hop_samples != cqt.frame_hop_samples
        || mel.frame_hop_samples != vqt.frame_hop_samples
    {
        return Err(Error::Shape("feature hops differ".into()));
    }
    let mel_db: Vec<f64> = match mel.scale {
        Scale::Decibel => mel.data.clone(),
        Scale::Magnitude => mel.data.iter().map(|&m| amplitude_to_db(m)).collect(),
    };
    let plane = FEATURE_ROWS * cols;
    let mut data = vec![0.0f32; FEATURE_CHANNELS * plane];
    let channels = [
        resample_rows(&mel_db, mel.rows, cols, FEATURE_ROWS),
        resample_rows(&chroma_db(cqt), 12, cols, FEATURE_ROWS),
        resample_rows(&chroma_db(vqt), 12, cols, FEATURE_ROWS),
    ];
    for (c, values) in channels.iter().enumerate() {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("feature channel {c}")));
        }
        min_max_into(values, &mut data[c * plane..(c + 1) * plane]);
    }
    Ok(FeatureStack {
        data,
        cols,
        frame_hop_samples: mel.frame_hop_samples,
    })
}

fn chroma_db(chroma: &Chromagram) -> Vec<f64> {
    chroma.data.iter().map(|&m| amplitude_to_db(m)).collect()
}

/// An ordered run of `count` patches, each `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub data: Vec<f32>,
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Start frame of each window in the source stack.
    pub starts: Vec<usize>,
    pub patch_hop_frames: usize,
}

impl PatchSequence {
    /// Wrap raw patch data; `data.len()` must equal `count * channels * height * width`.
    pub fn new(
        data: Vec<f32>,
        count: usize,
        channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if count == 0 || data.len() != count * channels * height * width {
            return Err(Error::Shape(format!(
                "{} values cannot hold {count} patches of {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(PatchSequence {
            data,
            count,
            channels,
            height,
            width,
            starts: (0..count).map(|j| j * width).collect(),
            patch_hop_frames: width,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn patch(&self, j: usize) -> &[f32] {
        let n = self.patch_len();
        &self.data[j * n..(j + 1) * n]
    }

    /// Same patches in a new order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &j in order {
            data.extend_from_slice(self.patch(j));
        }
        PatchSequence {
            data,
            starts: order.iter().map(|&j| self.starts[j]).collect(),
            ..self.clone()
        }
    }
}

/// Window starts for a stack of `cols` frames.
pub fn patch_starts(cols: usize, width: usize, hop: usize) -> Vec<usize> {
    if cols <= width {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..)
        .map(|j| j * hop)
        .take_while(|s| s + width <= cols)
        .collect();
    if *starts.last().unwrap() != cols - width {
        starts.push(cols - width);
    }
    starts
}

/// Cut overlapping square windows; short stacks are right-padded by repeating
/// the last frame.
pub fn patchify(stack: &FeatureStack, cfg: &FeatureConfig) -> PatchSequence {
    let w = FEATURE_ROWS;
    let starts = patch_starts(stack.cols, w, cfg.patch_hop_frames.max(1));
    let plane = FEATURE_ROWS * w;
    let mut data = vec![0.0f32; starts.len() * FEATURE_CHANNELS * plane];
    for (j, &s) in starts.iter().enumerate() {
        for c in 0..FEATURE_CHANNELS {
            for r in 0..FEATURE_ROWS {
                let src = &stack.data
                    [(c * FEATURE_ROWS + r) * stack.cols..(c * FEATURE_ROWS + r + 1) * stack.cols];
                let dst = &mut data[((j * FEATURE_CHANNELS + c) * FEATURE_ROWS + r) * w..][..w];
                for (x, d) in dst.iter_mut().enumerate() {
                    *d = src[(s + x).min(stack.cols - 1)];
                }
            }
        }
    }
    PatchSequence {
        data,
        count: starts.len(),
        channels: FEATURE_CHANNELS,
        height: FEATURE_ROWS,
        width: w,
        starts,
        patch_hop_frames: cfg.patch_hop_frames,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mel_const(v: f64, cols: usize, rows: usize) -> Spectrogram {
        Spectrogram {
            data: vec![v; rows * cols],
            rows,
            cols,
            bin_freqs_hz: vec![0.0; rows],
            frame_hop_samples: 512,
            scale: Scale::Decibel,
        }
    }

    fn chroma_ramp(cols: usize) -> Chromagram {
        Chromagram {
            data: (0..12 * cols).map(|i| 1.0 + i as f64).collect(),
            cols,
            frame_hop_samples: 512,
        }
    }

    #[test]
    fn window_starts() {
        assert_eq!(patch_starts(646, 224, 112), vec![0, 112, 224, 336, 422]);
        assert_eq!(patch_starts(224, 224, 112), vec![0]);
        assert_eq!(patch_starts(100, 224, 112), vec![0]);
        assert_eq!(patch_starts(448, 224, 112), vec![0, 112, 224]);
    }

    #[test]
    fn identity_resample_and_chroma_stretch() {
        let src: Vec<f64> = (0..224 * 3).map(|i| i as f64).collect();
        assert_eq!(resample_rows(&src, 224, 3, 224), src);
        let mut onehot = vec![0.0; 12];
        onehot[0] = 1.0;
        let out = resample_rows(&onehot, 12, 1, 224);
        assert_eq!(out[0], 1.0);
        // grid row r reads chroma position r * 11 / 223
        for (r, &v) in out.iter().enumerate().take(21) {
            let expect = 1.0 - r as f64 * 11.0 / 223.0;
            assert!((v - expect).abs() < 1e-12);
        }
        assert!(out[21..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_mel_channel_is_zero_and_range_is_unit() {
        let stack = stack_features(
            &mel_const(-30.0, 10, 224),
            &chroma_ramp(10),
            &chroma_ramp(10),
            &FeatureConfig::default(),
        )
        .unwrap();
        assert!(stack.channel(0).iter().all(|&v| v == 0.0));
        for c in 1..3 {
            let ch = stack.channel(c);
            assert!(ch.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(ch.iter().copied().fold(0.0f32, f32::max), 1.0);
            assert_eq!(ch.iter().copied().fold(1.0f32, f32::min), 0.0);
        }
    }

    #[test]
    fn frame_mismatch_is_an_error() {
        let err = stack_features(
            &mel_const(0.0, 10, 224),
            &chroma_ramp(9),
            &chroma_ramp(10),
            &FeatureConfig::default(),
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn short_stack_pads_with_last_frame() {
        let cols = 100;
        let stack = FeatureStack {
            data: (0..3 * 224 * cols)
                .map(|i| (i % cols) as f32 / cols as f32)
                .collect(),
            cols,
            frame_hop_samples: 512,
        };
        let p = patchify(&stack, &FeatureConfig::default());
        assert_eq!(p.count, 1);
        let patch = p.patch(0);
        assert_eq!(patch.len(), 3 * 224 * 224);
        assert_eq!(patch[99], 0.99);
        assert_eq!(patch[223], 0.99);
        assert_eq!(patch[224], 0.0);
    }

    #[test]
    fn patches_copy_their_windows() {
        let cols = 646;
        let stack = FeatureStack {
            data: (0..3 * 224 * cols)
                .map(|i| (i % 997) as f32 / 997.0)
                .collect(),
            cols,
            frame_hop_samples: 512,
        };
        let p = patchify(&stack, &FeatureConfig::default());
        assert_eq!(p.count, 5);
        for (j, &s) in p.starts.iter().enumerate() {
            let patch = p.patch(j);
            for (c, r, x) in [(0, 0, 0), (1, 17, 100), (2, 223, 223)] {
                assert_eq!(patch[(c * 224 + r) * 224 + x], stack.at(c, r, s + x));
            }
        }
    }
}
