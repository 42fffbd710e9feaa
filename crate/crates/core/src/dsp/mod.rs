//! Spectral kernels: framing and STFT power, Slaney mel filterbank, dB mel
//! spectrogram, MFCC, chroma, spectral shape descriptors, frame statistics
//! and grayscale spectrogram export.

mod chroma;
mod descriptors;
mod export;
mod mel;
mod mfcc;
mod stft;

pub use chroma::{chroma, pitch_class_of};
pub use descriptors::{frame_stats, spectral_descriptors, FrameStats, SpectralShape};
pub use export::{export_spectrogram_pgm, mel_db_to_csv, render_spectrogram, GrayImage};
pub use mel::{
    hz_to_mel, mel_db_from_power, mel_filterbank, mel_spectrogram_db, mel_to_hz, MelFilterbank,
    MelParams, MelSpectrogramDb, RefMode,
};
pub use mfcc::{dct_ii_orthonormal, mfcc};
pub use stft::{frame_count, stft_power, PowerSpectrogram};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("empty input signal")]
    EmptyInput,
    #[error("signal of {len} samples is shorter than one frame of {n_fft}")]
    TooShort { len: usize, n_fft: usize },
    #[error("invalid frame parameters: {0}")]
    InvalidFrame(String),
    #[error("fmax above Nyquist: {fmax} Hz > {nyquist} Hz")]
    FmaxAboveNyquist { fmax: f64, nyquist: f64 },
    #[error("invalid mel parameters: {0}")]
    InvalidMel(String),
    #[error("mel filter {band} has empty support; too many bands for the FFT resolution")]
    EmptyFilter { band: usize },
    #[error("n_mfcc {n_mfcc} exceeds n_mels {n_mels}")]
    TooManyCoefficients { n_mfcc: usize, n_mels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed PGM: {0}")]
    MalformedImage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Framing configuration shared by the STFT and frame statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    /// Reflect-pad by `n_fft / 2` so frame `t` is centred on sample `t * hop`.
    pub center: bool,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            n_fft: 2048,
            hop: 512,
            window: Window::Hann,
            center: true,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.n_fft < 2 {
            return Err(DspError::InvalidFrame(format!(
                "n_fft must be at least 2, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::InvalidFrame(format!(
                "hop must be in 1..={}, got {}",
                self.n_fft, self.hop
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_rows = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix rows");
        Self {
            rows: n_rows,
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn max(&self) -> f64 {
        self.iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.iter().fold(f64::INFINITY, f64::min)
    }

    /// Mean of each row (mean over columns).
    pub fn row_means(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().sum::<f64>() / self.cols as f64)
            .collect()
    }
}
