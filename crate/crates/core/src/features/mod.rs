//! Mel spectrograms, constant-Q and variable-Q chromagrams, the stacked
//! three-channel feature matrix and its overlapping square patches.

use alloc::format;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::{Error, Result};

mod cqt;
mod fft;
mod mel;
mod stack;
mod stft;

pub use cqt::{
    chroma_index, constant_q_quality, cqt_chroma, vqt_chroma, Chromagram, QKernelBank,
    PITCH_CLASSES,
};
pub use fft::Fft;
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelFilterbank};
pub use stack::{
    patch_starts, patchify, resample_rows, stack_features, FeatureStack, PatchSequence,
    FEATURE_CHANNELS, FEATURE_ROWS,
};
pub use stft::{frame_count, hann_window, reflect_pad, stft_magnitude, Scale, Spectrogram};

/// Feature extraction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub n_fft: usize,
    pub stft_hop: usize,
    pub n_mels: usize,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    pub cqt_fmin_hz: f64,
    pub bins_per_octave: usize,
    pub n_octaves: usize,
    pub vqt_gamma_hz: f64,
    pub patch_width_frames: usize,
    pub patch_hop_frames: usize,
}

/// Default VQT bandwidth offset: `228.7 * (2^(1/12) - 1)` Hz.
pub fn default_vqt_gamma() -> f64 {
    228.7 * (crate::float::Float::powf(2.0f64, 1.0 / 12.0) - 1.0)
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            n_fft: 2048,
            stft_hop: 512,
            n_mels: 224,
            mel_fmin_hz: 20.0,
            mel_fmax_hz: 20_000.0,
            cqt_fmin_hz: 32.703,
            bins_per_octave: 12,
            n_octaves: 7,
            vqt_gamma_hz: default_vqt_gamma(),
            patch_width_frames: FEATURE_ROWS,
            patch_hop_frames: 112,
        }
    }
}

impl FeatureConfig {
    pub fn n_bins(&self) -> usize {
        self.bins_per_octave * self.n_octaves
    }

    pub fn cqt_fmax_hz(&self) -> f64 {
        let top = self.n_bins().saturating_sub(1) as f64 / self.bins_per_octave as f64;
        self.cqt_fmin_hz * crate::float::Float::powf(2.0f64, top)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if !self.n_fft.is_power_of_two() || self.n_fft < 4 {
            return Err(Error::Config(format!(
                "n_fft {} is not a power of two",
                self.n_fft
            )));
        }
        if self.stft_hop == 0 {
            return Err(Error::Config("stft_hop must be positive".into()));
        }
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if !(self.mel_fmin_hz >= 0.0
            && self.mel_fmin_hz < self.mel_fmax_hz
            && self.mel_fmax_hz <= nyquist)
        {
            return Err(Error::Config(format!(
                "mel range [{}, {}] Hz invalid for Nyquist {nyquist} Hz",
                self.mel_fmin_hz, self.mel_fmax_hz
            )));
        }
        if self.bins_per_octave == 0 || self.n_octaves == 0 || !(self.cqt_fmin_hz > 0.0) {
            return Err(Error::Config("constant-Q range is empty".into()));
        }
        if self.cqt_fmax_hz() >= nyquist {
            return Err(Error::Config(format!(
                "top constant-Q bin {:.1} Hz is not below Nyquist {nyquist} Hz",
                self.cqt_fmax_hz()
            )));
        }
        if !(self.vqt_gamma_hz >= 0.0) {
            return Err(Error::Config("vqt_gamma_hz must be nonnegative".into()));
        }
        if self.patch_width_frames != FEATURE_ROWS {
            return Err(Error::Config(format!(
                "patches must be {FEATURE_ROWS} frames wide"
            )));
        }
        if self.patch_hop_frames == 0 || self.patch_hop_frames > self.patch_width_frames {
            return Err(Error::Config(format!(
                "patch_hop_frames must lie in 1..={} so patches cover every frame",
                self.patch_width_frames
            )));
        }
        Ok(())
    }
}

/// Full clip-to-patches pipeline: mel, CQT and VQT chroma, stacking, patching.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureStack> {
    cfg.validate(clip.sample_rate())?;
    let spec = stft_magnitude(clip, cfg)?;
    let fb = mel_filterbank(cfg, clip.sample_rate())?;
    let mel = mel_spectrogram(&spec, &fb)?;
    let cqt = cqt_chroma(clip, cfg)?;
    let vqt = vqt_chroma(clip, cfg)?;
    stack_features(&mel, &cqt, &vqt, cfg)
}

/// [`extract_features`] followed by [`patchify`].
pub fn extract_patches(clip: &AudioClip, cfg: &FeatureConfig) -> Result<PatchSequence> {
    Ok(patchify(&extract_features(clip, cfg)?, cfg))
}
