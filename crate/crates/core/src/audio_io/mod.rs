//! Audio ingestion: WAV decoding, mono mixdown with band-limited
//! resampling, and the labelled clip manifest.

mod manifest;
mod resample;
mod wav;

pub use manifest::{load_manifest, Manifest, ManifestEntry};
pub use resample::{mixdown, resample_mono, KaiserSincResampler};
pub use wav::{decode_wav, encode_wav, RawAudio, WavEncoding};

use std::path::Path;

use thiserror::Error;

use crate::Label;

/// Rate every clip is converted to before feature extraction.
pub const CANONICAL_RATE: u32 = 22_050;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("empty audio: data chunk holds no samples")]
    EmptyAudio,
    #[error("invalid sample rate {0}")]
    InvalidRate(u32),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A decoded mono clip at a known sample rate with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub clip_id: String,
    pub subject_id: String,
    pub label: Option<Label>,
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, clamping amplitudes into [-1, 1].
    ///
    /// Resampling can overshoot full scale by a hair near clipped input,
    /// hence the clamp. Non-finite samples and empty buffers are rejected.
    pub fn new(
        clip_id: impl Into<String>,
        subject_id: impl Into<String>,
        label: Option<Label>,
        mut samples: Vec<f64>,
        sample_rate: u32,
    ) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidRate(sample_rate));
        }
        for s in samples.iter_mut() {
            if !s.is_finite() {
                return Err(AudioError::MalformedHeader(
                    "non-finite sample value".to_string(),
                ));
            }
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            clip_id: clip_id.into(),
            subject_id: subject_id.into(),
            label,
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Decodes WAV bytes and canonicalizes them to mono at `target_rate`.
pub fn clip_from_wav_bytes(
    bytes: &[u8],
    clip_id: impl Into<String>,
    subject_id: impl Into<String>,
    label: Option<Label>,
    target_rate: u32,
) -> Result<AudioClip, AudioError> {
    let raw = decode_wav(bytes)?;
    let samples = resample_mono(&raw, target_rate)?;
    AudioClip::new(clip_id, subject_id, label, samples, target_rate)
}

/// Reads a WAV file from disk and canonicalizes it to mono at `target_rate`.
pub fn load_clip(
    path: &Path,
    clip_id: impl Into<String>,
    subject_id: impl Into<String>,
    label: Option<Label>,
    target_rate: u32,
) -> Result<AudioClip, AudioError> {
    let bytes = std::fs::read(path).map_err(|source| AudioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    clip_from_wav_bytes(&bytes, clip_id, subject_id, label, target_rate)
}
