//! Direct-evaluation constant-Q and variable-Q transforms folded to chroma.
//!
//! Bin `k` sits at `f_k = fmin * 2^(k / B)`. Its bandwidth is
//! `alpha * f_k + gamma` with `alpha = 2^(1/B) - 1`, so `gamma = 0` is the
//! constant-Q case. Each bin is a Hann-windowed complex exponential of length
//! `N_k = round(Q_k * sr / f_k)` evaluated directly against the signal at every
//! frame center.

use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::stft::{frame_count, reflect_pad};
use super::FeatureConfig;
use crate::audio::AudioClip;
use crate::{Error, Result};

pub const PITCH_CLASSES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

/// `Q = 1 / (2^(1/B) - 1)`.
pub fn constant_q_quality(bins_per_octave: usize) -> f64 {
    1.0 / (Float::powf(2.0f64, 1.0 / bins_per_octave as f64) - 1.0)
}

/// Pitch class (0 = C) nearest to a frequency, with A4 = 440 Hz.
pub fn chroma_index(freq_hz: f64) -> usize {
    let semis = Float::round(12.0 * Float::log2(freq_hz / 440.0)) as i64;
    (semis + 9).rem_euclid(12) as usize
}

/// 12 x T pitch-class magnitudes, row 0 = C.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    pub data: Vec<f64>,
    pub cols: usize,
    pub frame_hop_samples: usize,
}

impl Chromagram {
    pub fn at(&self, pc: usize, col: usize) -> f64 {
        self.data[pc * self.cols + col]
    }

    pub fn argmax(&self, col: usize) -> usize {
        (0..12)
            .max_by(|&a, &b| self.at(a, col).total_cmp(&self.at(b, col)))
            .unwrap_or(0)
    }
}

/// Precomputed analysis kernels for one sample rate and bandwidth offset.
#[derive(Debug, Clone)]
pub struct QKernelBank {
    pub freqs_hz: Vec<f64>,
    pub qualities: Vec<f64>,
    pub lengths: Vec<usize>,
    pitch: Vec<usize>,
    re: Vec<Vec<f32>>,
    im: Vec<Vec<f32>>,
}

impl QKernelBank {
    pub fn new(cfg: &FeatureConfig, sample_rate: u32, gamma_hz: f64) -> Result<Self> {
        let b = cfg.bins_per_octave;
        if b == 0 || cfg.n_octaves == 0 || !(cfg.cqt_fmin_hz > 0.0) || !(gamma_hz >= 0.0) {
            return Err(Error::Config("invalid constant-Q parameters".into()));
        }
        let sr = f64::from(sample_rate);
        let alpha = Float::powf(2.0f64, 1.0 / b as f64) - 1.0;
        let n_bins = cfg.n_bins();
        let mut bank = QKernelBank {
            freqs_hz: Vec::with_capacity(n_bins),
            qualities: Vec::with_capacity(n_bins),
            lengths: Vec::with_capacity(n_bins),
            pitch: Vec::with_capacity(n_bins),
            re: Vec::with_capacity(n_bins),
            im: Vec::with_capacity(n_bins),
        };
        for k in 0..n_bins {
            let f = cfg.cqt_fmin_hz * Float::powf(2.0f64, k as f64 / b as f64);
            if f >= sr / 2.0 {
                return Err(Error::Config(format!(
                    "constant-Q bin {k} at {f:.1} Hz exceeds Nyquist"
                )));
            }
            let q = f / (alpha * f + gamma_hz);
            let n = (Float::round(q * sr / f) as usize).max(1);
            let window: Vec<f64> = (0..n)
                .map(|i| 0.5 - 0.5 * Float::cos(core::f64::consts::TAU * i as f64 / n as f64))
                .collect();
            let norm: f64 = window.iter().sum::<f64>().max(f64::MIN_POSITIVE);
            let half = (n / 2) as f64;
            let (mut re, mut im) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for (i, w) in window.iter().enumerate() {
                let phase = core::f64::consts::TAU * f * (i as f64 - half) / sr;
                re.push((w * Float::cos(phase) / norm) as f32);
                im.push((-w * Float::sin(phase) / norm) as f32);
            }
            bank.freqs_hz.push(f);
            bank.qualities.push(q);
            bank.lengths.push(n);
            bank.pitch.push(chroma_index(f));
            bank.re.push(re);
            bank.im.push(im);
        }
        Ok(bank)
    }

    pub fn n_bins(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn max_len(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Bin magnitudes, row-major `n_bins x T`, with frame centers every `hop` samples.
    pub fn magnitudes(&self, samples: &[f32], hop: usize) -> Result<(Vec<f64>, usize)> {
        if hop == 0 {
            return Err(Error::Config("hop must be positive".into()));
        }
        let longest = self.max_len();
        if longest > samples.len() {
            return Err(Error::Config(format!(
                "longest constant-Q kernel ({longest} samples) exceeds the clip ({} samples)",
                samples.len()
            )));
        }
        let pad = longest / 2 + 1;
        let padded = reflect_pad(samples, pad)?;
        let cols = frame_count(samples.len(), hop);
        let mut out = vec![0.0; self.n_bins() * cols];
        for k in 0..self.n_bins() {
            let n = self.lengths[k];
            let (re, im) = (&self.re[k], &self.im[k]);
            for t in 0..cols {
                let start = pad + t * hop - n / 2;
                let (a, b) = dot2(&padded[start..start + n], re, im);
                out[k * cols + t] =
                    Float::sqrt(f64::from(a) * f64::from(a) + f64::from(b) * f64::from(b));
            }
        }
        Ok((out, cols))
    }

    /// Sum bin magnitudes over octaves into 12 pitch-class rows.
    pub fn chroma(&self, samples: &[f32], hop: usize) -> Result<Chromagram> {
        let (mags, cols) = self.magnitudes(samples, hop)?;
        let mut data = vec![0.0; 12 * cols];
        for (k, &pc) in self.pitch.iter().enumerate() {
            for (o, &m) in data[pc * cols..(pc + 1) * cols]
                .iter_mut()
                .zip(&mags[k * cols..(k + 1) * cols])
            {
                *o += m;
            }
        }
        Ok(Chromagram {
            data,
            cols,
            frame_hop_samples: hop,
        })
    }
}

/// Two simultaneous dot products with eight-lane accumulators.
fn dot2(x: &[f32], a: &[f32], b: &[f32]) -> (f32, f32) {
    const L: usize = 8;
    let mut acc_a = [0.0f32; L];
    let mut acc_b = [0.0f32; L];
    let chunks = x.len() / L;
    for c in 0..chunks {
        let xs: &[f32; L] = x[c * L..c * L + L].try_into().unwrap();
        let as_: &[f32; L] = a[c * L..c * L + L].try_into().unwrap();
        let bs: &[f32; L] = b[c * L..c * L + L].try_into().unwrap();
        for l in 0..L {
            acc_a[l] += xs[l] * as_[l];
            acc_b[l] += xs[l] * bs[l];
        }
    }
    let (mut sa, mut sb) = (acc_a.iter().sum::<f32>(), acc_b.iter().sum::<f32>());
    for i in chunks * L..x.len() {
        sa += x[i] * a[i];
        sb += x[i] * b[i];
    }
    (sa, sb)
}

/// Constant-Q chromagram: the variable-Q path with `gamma = 0`.
pub fn cqt_chroma(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Chromagram> {
    QKernelBank::new(cfg, clip.sample_rate(), 0.0)?.chroma(clip.samples(), cfg.stft_hop)
}

/// Variable-Q chromagram with bandwidth offset `cfg.vqt_gamma_hz`.
pub fn vqt_chroma(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Chromagram> {
    QKernelBank::new(cfg, clip.sample_rate(), cfg.vqt_gamma_hz)?
        .chroma(clip.samples(), cfg.stft_hop)
}
