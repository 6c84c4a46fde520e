//! Mono sample buffers, RIFF/WAVE decoding and decibel conversion.

use crate::float::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{Error, Result};

/// Canonical sample rate of the dataset.
pub const CANONICAL_SAMPLE_RATE: u32 = 44_100;

/// Floor applied before taking logarithms; silence maps to -200 dB.
pub const DB_FLOOR: f64 = 1e-10;

/// `20 * log10(max(x, 1e-10))`.
pub fn amplitude_to_db(x: f64) -> f64 {
    20.0 * Float::log10(x.max(DB_FLOOR))
}

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numeric(format!("audio sample {i}")));
        }
        let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
        Ok(AudioBuffer {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Cut `duration_s` seconds starting at `start_s`, both rounded to whole samples.
    pub fn clip(&self, start_s: f64, duration_s: f64) -> Result<AudioClip> {
        let sr = f64::from(self.sample_rate);
        let start = Float::round(start_s * sr) as usize;
        let len = Float::round(duration_s * sr) as usize;
        if start + len > self.samples.len() || len == 0 {
            return Err(Error::Invariant(format!(
                "clip [{start_s:.3}s, +{duration_s:.3}s) outside `{}` ({:.3}s)",
                self.source_id,
                self.duration_s()
            )));
        }
        Ok(AudioClip {
            buffer: AudioBuffer {
                samples: self.samples[start..start + len].to_vec(),
                sample_rate: self.sample_rate,
                source_id: self.source_id.clone(),
            },
            start_s: start as f64 / sr,
            duration_s: len as f64 / sr,
        })
    }
}

/// A fixed-length excerpt of a track.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub buffer: AudioBuffer,
    pub start_s: f64,
    pub duration_s: f64,
}

impl AudioClip {
    /// Wrap a whole buffer as a clip starting at zero.
    pub fn whole(buffer: AudioBuffer) -> Self {
        let duration_s = buffer.duration_s();
        AudioClip {
            buffer,
            start_s: 0.0,
            duration_s,
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.buffer.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.buffer.sample_rate
    }
}

/// PCM encodings understood by the WAVE codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl SampleFormat {
    fn bytes(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Pcm24 => 3,
            SampleFormat::Float32 => 4,
        }
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct FmtChunk {
    channels: u16,
    sample_rate: u32,
    format: SampleFormat,
}

fn parse_fmt(chunk: &[u8]) -> Result<FmtChunk> {
    if chunk.len() < 16 {
        return Err(Error::Format("fmt chunk shorter than 16 bytes".into()));
    }
    let mut tag = u16_at(chunk, 0);
    let channels = u16_at(chunk, 2);
    let sample_rate = u32_at(chunk, 4);
    let bits = u16_at(chunk, 14);
    if tag == FORMAT_EXTENSIBLE {
        if chunk.len() < 26 {
            return Err(Error::Format(
                "truncated WAVE_FORMAT_EXTENSIBLE header".into(),
            ));
        }
        tag = u16_at(chunk, 24);
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_PCM, 24) => SampleFormat::Pcm24,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        (t, b) => {
            return Err(Error::UnsupportedCodec(format!(
                "format tag {t:#06x} with {b} bits per sample"
            )))
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedCodec(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    Ok(FmtChunk {
        channels,
        sample_rate,
        format,
    })
}

fn decode_sample(format: SampleFormat, b: &[u8]) -> Result<f32> {
    Ok(match format {
        SampleFormat::Pcm16 => f32::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0,
        SampleFormat::Pcm24 => {
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f32 / 8_388_608.0
        }
        SampleFormat::Float32 => {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !v.is_finite() {
                return Err(Error::Format("non-finite float sample".into()));
            }
            v.clamp(-1.0, 1.0)
        }
    })
}

/// Decode a RIFF/WAVE byte stream into a mono buffer.
///
/// Stereo input is averaged per sample; no resampling is performed.
pub fn decode_wav(bytes: &[u8], source_id: &str) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }
    let mut fmt = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body_start = at + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Format("chunk size overflow".into()))?;
        match id {
            b"fmt " => {
                if body_end > bytes.len() {
                    return Err(Error::Format("truncated fmt chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_end])?);
            }
            b"data" => {
                // Some writers leave the data size unfinished; clamp to the stream.
                data = Some(&bytes[body_start..body_end.min(bytes.len())]);
            }
            _ => {}
        }
        at = body_end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    let frame_bytes = fmt.format.bytes() * usize::from(fmt.channels);
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(Error::EmptyAudio(source_id.to_string()));
    }
    let width = fmt.format.bytes();
    let mut samples = Vec::with_capacity(frames);
    for frame in data.chunks_exact(frame_bytes) {
        let s = if fmt.channels == 1 {
            decode_sample(fmt.format, frame)?
        } else {
            let l = decode_sample(fmt.format, &frame[..width])?;
            let r = decode_sample(fmt.format, &frame[width..])?;
            (l + r) * 0.5
        };
        samples.push(s);
    }
    Ok(AudioBuffer {
        samples,
        sample_rate: fmt.sample_rate,
        source_id: source_id.to_string(),
    })
}

/// Encode a mono buffer as a canonical 44-byte-header RIFF/WAVE stream.
pub fn encode_wav(audio: &AudioBuffer, format: SampleFormat) -> Vec<u8> {
    let width = format.bytes();
    let data_len = audio.samples.len() * width;
    let mut out = Vec::with_capacity(44 + data_len);
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 16u16),
        SampleFormat::Pcm24 => (FORMAT_PCM, 24),
        SampleFormat::Float32 => (FORMAT_FLOAT, 32),
    };
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * width as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &audio.samples {
        match format {
            SampleFormat::Pcm16 => {
                let v = Float::round(s * 32768.0).clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
            SampleFormat::Pcm24 => {
                let v = Float::round(s * 8_388_608.0).clamp(-8_388_608.0, 8_388_607.0) as i32;
                out.extend_from_slice(&v.to_le_bytes()[..3]);
            }
            SampleFormat::Float32 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    out
}
