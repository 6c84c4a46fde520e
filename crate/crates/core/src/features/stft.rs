use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureConfig, Fft};
use crate::audio::AudioClip;
use crate::{Error, Result};

/// Units of a spectrogram's entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Magnitude,
    Decibel,
}

/// Row-major `rows x cols` time-frequency matrix; row 0 is the lowest frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub bin_freqs_hz: Vec<f64>,
    pub frame_hop_samples: usize,
    pub scale: Scale,
}

impl Spectrogram {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Row index of the largest entry in a column.
    pub fn argmax_row(&self, col: usize) -> usize {
        (0..self.rows)
            .max_by(|&a, &b| self.at(a, col).total_cmp(&self.at(b, col)))
            .unwrap_or(0)
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * Float::cos(core::f64::consts::TAU * i as f64 / n as f64))
        .collect()
}

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len / hop + 1
}

/// Mirror-pad by `pad` samples on both sides, excluding the edge sample.
pub fn reflect_pad(x: &[f32], pad: usize) -> Result<Vec<f32>> {
    if x.len() <= pad {
        return Err(Error::Config(format!(
            "cannot reflect-pad {} samples by {pad}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i]));
    out.extend_from_slice(x);
    let n = x.len();
    out.extend((0..pad).map(|i| x[n - 2 - i]));
    Ok(out)
}

/// Centered, Hann-windowed short-time magnitude spectrum.
pub fn stft_magnitude(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Spectrogram> {
    let x = clip.samples();
    let n_fft = cfg.n_fft;
    if !n_fft.is_power_of_two() || cfg.stft_hop == 0 {
        return Err(Error::Config(format!(
            "invalid n_fft {n_fft} / hop {}",
            cfg.stft_hop
        )));
    }
    if x.len() < n_fft {
        return Err(Error::EmptyAudio(format!(
            "clip has {} samples, fewer than n_fft = {n_fft}",
            x.len()
        )));
    }
    let padded = reflect_pad(x, n_fft / 2)?;
    let window = hann_window(n_fft);
    let fft = Fft::new(n_fft);
    let rows = n_fft / 2 + 1;
    let cols = frame_count(x.len(), cfg.stft_hop);
    let mut data = vec![0.0; rows * cols];
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    for t in 0..cols {
        let start = t * cfg.stft_hop;
        for i in 0..n_fft {
            re[i] = f64::from(padded[start + i]) * window[i];
            im[i] = 0.0;
        }
        fft.forward(&mut re, &mut im);
        for k in 0..rows {
            data[k * cols + t] = Float::sqrt(re[k] * re[k] + im[k] * im[k]);
        }
    }
    let sr = f64::from(clip.sample_rate());
    Ok(Spectrogram {
        data,
        rows,
        cols,
        bin_freqs_hz: (0..rows).map(|k| k as f64 * sr / n_fft as f64).collect(),
        frame_hop_samples: cfg.stft_hop,
        scale: Scale::Magnitude,
    })
}
