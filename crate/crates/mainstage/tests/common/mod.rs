//! Procedural stand-ins for the eight sub-genres: one spectral texture each,
//! wrapped in a quiet intro and outro so that drop detection has work to do.
#![allow(dead_code)]

use std::f64::consts::TAU;

use mainstage_core::audio::{AudioBuffer, CANONICAL_SAMPLE_RATE};
use mainstage_core::dataset::Genre;
use mainstage_core::rng::{derive_seed, Stream};

pub const SR: f64 = CANONICAL_SAMPLE_RATE as f64;

#[derive(Debug, Clone, Copy)]
pub struct TrackShape {
    pub intro_s: f64,
    pub drop_s: f64,
    pub outro_s: f64,
    /// Linear gain of intro and outro relative to the drop.
    pub quiet_gain: f64,
}

impl Default for TrackShape {
    fn default() -> Self {
        TrackShape {
            intro_s: 1.5,
            drop_s: 10.0,
            outro_s: 1.5,
            quiet_gain: 0.1,
        }
    }
}

impl TrackShape {
    pub fn len_s(&self) -> f64 {
        self.intro_s + self.drop_s + self.outro_s
    }
}

fn saw(phase: f64) -> f64 {
    2.0 * (phase - phase.floor()) - 1.0
}

fn square(phase: f64) -> f64 {
    if phase - phase.floor() < 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Periodic gate between `floor` and 1 that never goes silent.
fn pulse(t: f64, period: f64, duty: f64, floor: f64) -> f64 {
    if (t / period).fract() < duty {
        1.0
    } else {
        floor
    }
}

/// `n` samples of texture `genre` with per-track parameters drawn from `rng`.
pub fn texture(genre: usize, n: usize, rng: &mut Stream) -> Vec<f64> {
    let beat = 60.0 / rng.uniform_in(120.0, 130.0);
    let root = rng.uniform_in(0.0, 1.0);
    let mut noise = Stream::new(rng.next_u64());
    let mut out = vec![0.0; n];
    match genre {
        // Detuned sawtooth triads.
        0 => {
            let f = 110.0 * 2f64.powf(root);
            let notes = [f, f * 1.26, f * 1.5, f * 1.007];
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                *o = notes.iter().map(|&fr| saw(fr * t)).sum::<f64>() * 0.15;
            }
        }
        // Gated white noise.
        1 => {
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                *o = 0.4 * noise.uniform_in(-1.0, 1.0) * pulse(t, beat / 2.0, 0.6, 0.5);
            }
        }
        // Plucked sines on a pentatonic grid.
        2 => {
            let steps = [0.0, 2.0, 4.0, 7.0, 9.0, 12.0, 14.0, 16.0];
            let step = beat / 2.0;
            let base = 440.0 * 2f64.powf(root);
            let mut freq = base;
            let mut note = usize::MAX;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let k = (t / step) as usize;
                if k != note {
                    note = k;
                    freq = base * 2f64.powf(steps[noise.below(steps.len())] / 12.0);
                }
                let local = t - k as f64 * step;
                *o = 0.5 * (TAU * freq * local).sin() * (0.4 + 0.6 * (-local / 0.12).exp());
            }
        }
        // Sub bass with a pitched kick on every beat.
        3 => {
            let f = 45.0 + 20.0 * root;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let local = t % beat;
                let kick_phase = 50.0 * local + 100.0 * 0.03 * (1.0 - (-local / 0.03).exp());
                let kick = (TAU * kick_phase).sin() * (-local / 0.08).exp();
                *o = 0.4 * (TAU * f * t).sin() + 0.25 * kick;
            }
        }
        // Square-wave stabs on sixteenths.
        4 => {
            let f = 700.0 * 2f64.powf(root * 0.8);
            let step = beat / 4.0;
            let mut phase = 0.0;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let inst = f * (1.0 + 0.01 * (TAU * 5.0 * t).sin());
                phase += inst / SR;
                let local = t % step;
                *o = 0.25 * square(phase) * (0.3 + 0.7 * (-local / 0.03).exp());
            }
        }
        // FM bells restruck on each beat.
        5 => {
            let fc = 900.0 * 2f64.powf(root * 0.7);
            let fm = fc * 3.5;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let local = t % beat;
                let env = 0.35 + 0.65 * (-local / 0.3).exp();
                let index = 4.0 * env;
                *o = 0.4 * env * (TAU * fc * t + index * (TAU * fm * t).sin()).sin();
            }
        }
        // Bright hats: twice-differenced noise, struck on sixteenths.
        6 => {
            let (mut p1, mut p2) = (0.0, 0.0);
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let w = noise.uniform_in(-1.0, 1.0);
                let d1 = w - p1;
                let d2 = d1 - p2;
                p1 = w;
                p2 = d1;
                let local = t % (beat / 4.0);
                *o = 0.18 * d2 * (0.25 + 0.75 * (-local / 0.015).exp());
            }
        }
        // Repeating upward chirps, one per bar.
        _ => {
            let bar = 4.0 * beat;
            let (f0, f1) = (200.0 * 2f64.powf(root), 3200.0 * 2f64.powf(root));
            let rate = (f1 - f0) / bar;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / SR;
                let local = t % bar;
                *o = 0.5 * (TAU * (f0 * local + 0.5 * rate * local * local)).sin();
            }
        }
    }
    out
}

/// Raw drop texture plus the quiet-loud-quiet gain curve for one track.
pub fn render(genre: usize, shape: &TrackShape, seed: u64) -> Vec<f64> {
    let n = (shape.len_s() * SR) as usize;
    let mut rng = Stream::new(seed);
    let mut x = texture(genre, n, &mut rng);
    let (a, b) = (
        (shape.intro_s * SR) as usize,
        ((shape.intro_s + shape.drop_s) * SR) as usize,
    );
    for (i, v) in x.iter_mut().enumerate() {
        if i < a || i >= b {
            *v *= shape.quiet_gain;
        }
    }
    x
}

pub fn to_buffer(samples: &[f64], source_id: &str) -> AudioBuffer {
    let data = samples.iter().map(|&v| v.clamp(-1.0, 1.0) as f32).collect();
    AudioBuffer::new(data, CANONICAL_SAMPLE_RATE, source_id).unwrap()
}

pub fn track_id(genre: usize, track: usize) -> String {
    format!("{}_{track:03}", Genre::ALL[genre].slug())
}

pub fn track_seed(seed: u64, genre: usize, track: usize) -> u64 {
    derive_seed(seed, &[genre as u64, track as u64])
}

/// One clean track of `genre`.
pub fn track(genre: usize, track: usize, shape: &TrackShape, seed: u64) -> AudioBuffer {
    let x = render(genre, shape, track_seed(seed, genre, track));
    to_buffer(&x, &track_id(genre, track))
}

/// `weight * a + (1 - weight) * b`, sample by sample.
pub fn mix(a: &[f64], b: &[f64], weight: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| weight * x + (1.0 - weight) * y)
        .collect()
}
