use crate::float::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureConfig, Scale, Spectrogram};
use crate::audio::amplitude_to_db;
use crate::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * Float::log10(1.0 + f / 700.0)
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (Float::powf(10.0, m / 2595.0) - 1.0)
}

/// Triangular peak-1 filters over the one-sided FFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// Row-major `n_mels x n_bins`.
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
    /// `n_mels + 2` break points; filter `r` peaks at `points_hz[r + 1]`.
    pub points_hz: Vec<f64>,
    spans: Vec<(usize, usize)>,
}

impl MelFilterbank {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.n_bins..(r + 1) * self.n_bins]
    }

    pub fn center_hz(&self, r: usize) -> f64 {
        self.points_hz[r + 1]
    }

    /// Weight of filter `r` at an arbitrary frequency.
    pub fn weight_at(&self, r: usize, f: f64) -> f64 {
        triangle(
            self.points_hz[r],
            self.points_hz[r + 1],
            self.points_hz[r + 2],
            f,
        )
    }
}

fn triangle(lo: f64, center: f64, hi: f64, f: f64) -> f64 {
    let up = (f - lo) / (center - lo);
    let down = (hi - f) / (hi - center);
    up.min(down).max(0.0)
}

pub fn mel_filterbank(cfg: &FeatureConfig, sample_rate: u32) -> Result<MelFilterbank> {
    let n_bins = cfg.n_fft / 2 + 1;
    let n_mels = cfg.n_mels;
    if n_mels == 0 || cfg.mel_fmin_hz >= cfg.mel_fmax_hz {
        return Err(Error::Config("empty mel range".into()));
    }
    let (m_lo, m_hi) = (hz_to_mel(cfg.mel_fmin_hz), hz_to_mel(cfg.mel_fmax_hz));
    let step = (m_hi - m_lo) / (n_mels + 1) as f64;
    let points_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(m_lo + step * i as f64))
        .collect();
    let bin_hz = f64::from(sample_rate) / cfg.n_fft as f64;
    let mut weights = vec![0.0; n_mels * n_bins];
    let mut spans = Vec::with_capacity(n_mels);
    for r in 0..n_mels {
        let (mut first, mut last) = (usize::MAX, 0);
        for k in 0..n_bins {
            let w = triangle(
                points_hz[r],
                points_hz[r + 1],
                points_hz[r + 2],
                k as f64 * bin_hz,
            );
            if w > 0.0 {
                weights[r * n_bins + k] = w;
                first = first.min(k);
                last = k + 1;
            }
        }
        if first == usize::MAX {
            return Err(Error::Config(format!(
                "mel filter {r} ({:.1} Hz) covers no FFT bin; reduce n_mels or raise n_fft",
                points_hz[r + 1]
            )));
        }
        spans.push((first, last));
    }
    Ok(MelFilterbank {
        weights,
        n_mels,
        n_bins,
        points_hz,
        spans,
    })
}

/// Mel power `fb * |S|^2`, reported as `20 log10(sqrt(power))` dB.
pub fn mel_spectrogram(spec: &Spectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if spec.rows != fb.n_bins {
        return Err(Error::Shape(format!(
            "filterbank expects {} bins, spectrogram has {}",
            fb.n_bins, spec.rows
        )));
    }
    if spec.scale != Scale::Magnitude {
        return Err(Error::Shape(
            "mel projection needs a magnitude spectrogram".into(),
        ));
    }
    let cols = spec.cols;
    let mut data = vec![0.0; fb.n_mels * cols];
    for r in 0..fb.n_mels {
        let (first, last) = fb.spans[r];
        let out = &mut data[r * cols..(r + 1) * cols];
        for k in first..last {
            let w = fb.weights[r * fb.n_bins + k];
            for (o, &m) in out.iter_mut().zip(spec.row(k)) {
                *o += w * m * m;
            }
        }
        for o in out.iter_mut() {
            *o = amplitude_to_db(Float::sqrt(*o));
        }
    }
    Ok(Spectrogram {
        data,
        rows: fb.n_mels,
        cols,
        bin_freqs_hz: (0..fb.n_mels).map(|r| fb.center_hz(r)).collect(),
        frame_hop_samples: spec.frame_hop_samples,
        scale: Scale::Decibel,
    })
}
