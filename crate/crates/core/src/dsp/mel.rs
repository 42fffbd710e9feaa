use serde::{Deserialize, Serialize};

use super::stft::stft_power;
use super::{DspError, FrameParams, Matrix, PowerSpectrogram};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
const POWER_FLOOR: f64 = 1e-10;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Reference used when converting mel power to decibels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefMode {
    /// Relative to the largest entry, which maps to 0 dB.
    Max,
    /// Relative to a power of 1.0.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelParams {
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
    pub ref_mode: RefMode,
    /// Dynamic range kept below the peak, in dB.
    pub top_db: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            n_mels: 128,
            fmin: 0.0,
            fmax: None,
            ref_mode: RefMode::Max,
            top_db: 80.0,
        }
    }
}

/// Triangular filters stored as contiguous nonzero runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    n_bins: usize,
    /// `(first bin, weights)` per band.
    filters: Vec<(usize, Vec<f64>)>,
    /// Centre frequency of every band.
    centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.filters.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn center_frequencies(&self) -> &[f64] {
        &self.centers
    }

    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        let (start, w) = &self.filters[band];
        if bin < *start {
            0.0
        } else {
            w.get(bin - start).copied().unwrap_or(0.0)
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_mels(), self.n_bins);
        for (band, (start, w)) in self.filters.iter().enumerate() {
            m.row_mut(band)[*start..start + w.len()].copy_from_slice(w);
        }
        m
    }

    /// Projects a power spectrogram onto the mel bands.
    pub fn apply(&self, power: &PowerSpectrogram) -> Matrix {
        assert_eq!(
            power.n_bins(),
            self.n_bins,
            "filterbank / spectrogram size mismatch"
        );
        let frames = power.n_frames();
        let mut out = Matrix::zeros(self.n_mels(), frames);
        for (band, (start, w)) in self.filters.iter().enumerate() {
            let dst = out.row_mut(band);
            for (j, &weight) in w.iter().enumerate() {
                let src = power.bins.row(start + j);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += weight * s;
                }
            }
        }
        out
    }
}

fn linspace(start: f64, stop: f64, num: usize) -> Vec<f64> {
    if num == 1 {
        return vec![start];
    }
    let step = (stop - start) / (num - 1) as f64;
    let mut v: Vec<f64> = (0..num).map(|i| start + i as f64 * step).collect();
    v[num - 1] = stop;
    v
}

/// Slaney-normalized triangular mel filterbank, `n_mels x (n_fft/2 + 1)`.
pub fn mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if fmax > nyquist {
        return Err(DspError::FmaxAboveNyquist { fmax, nyquist });
    }
    if n_mels == 0 {
        return Err(DspError::InvalidMel("n_mels must be at least 1".into()));
    }
    if n_fft < 2 {
        return Err(DspError::InvalidMel(format!("n_fft {n_fft} too small")));
    }
    if !(fmin >= 0.0 && fmin < fmax) {
        return Err(DspError::InvalidMel(format!(
            "need 0 <= fmin < fmax, got fmin={fmin} fmax={fmax}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let fft_freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate as f64 / n_fft as f64)
        .collect();
    let edges: Vec<f64> = linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
        .into_iter()
        .map(mel_to_hz)
        .collect();

    let mut filters = Vec::with_capacity(n_mels);
    for band in 0..n_mels {
        let (lo, mid, hi) = (edges[band], edges[band + 1], edges[band + 2]);
        let norm = 2.0 / (hi - lo);
        let weights: Vec<f64> = fft_freqs
            .iter()
            .map(|&f| {
                let rising = (f - lo) / (mid - lo);
                let falling = (hi - f) / (hi - mid);
                rising.min(falling).max(0.0) * norm
            })
            .collect();
        let first = weights.iter().position(|&w| w > 0.0);
        let last = weights.iter().rposition(|&w| w > 0.0);
        match (first, last) {
            (Some(a), Some(b)) => filters.push((a, weights[a..=b].to_vec())),
            _ => return Err(DspError::EmptyFilter { band }),
        }
    }
    Ok(MelFilterbank {
        n_bins,
        filters,
        centers: edges[1..=n_mels].to_vec(),
    })
}

/// Mel power spectrogram in decibels.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogramDb {
    /// `n_mels` rows by `n_frames` columns.
    pub bands: Matrix,
    pub n_mels: usize,
    /// Lowest level kept relative to the peak (negative dB).
    pub floor_db: f64,
    pub ref_mode: RefMode,
}

impl MelSpectrogramDb {
    pub fn n_frames(&self) -> usize {
        self.bands.cols()
    }
}

/// Mel projection plus dB conversion of an existing power spectrogram.
pub fn mel_db_from_power(
    power: &PowerSpectrogram,
    params: &MelParams,
) -> Result<MelSpectrogramDb, DspError> {
    if params.top_db.is_nan() || params.top_db <= 0.0 {
        return Err(DspError::InvalidMel(format!(
            "top_db must be positive, got {}",
            params.top_db
        )));
    }
    let fmax = params.fmax.unwrap_or(power.sample_rate as f64 / 2.0);
    let fb = mel_filterbank(
        params.n_mels,
        power.params.n_fft,
        power.sample_rate,
        params.fmin,
        fmax,
    )?;
    let mel = fb.apply(power);
    let reference = match params.ref_mode {
        RefMode::Max => mel.max(),
        RefMode::Unit => 1.0,
    };
    let ref_db = 10.0 * reference.max(POWER_FLOOR).log10();
    let mut bands = Matrix::zeros(mel.rows(), mel.cols());
    let mut peak = f64::NEG_INFINITY;
    for r in 0..mel.rows() {
        for (d, &m) in bands.row_mut(r).iter_mut().zip(mel.row(r)) {
            *d = 10.0 * m.max(POWER_FLOOR).log10() - ref_db;
            peak = peak.max(*d);
        }
    }
    let floor = peak - params.top_db;
    for r in 0..bands.rows() {
        for d in bands.row_mut(r) {
            *d = d.max(floor);
        }
    }
    Ok(MelSpectrogramDb {
        bands,
        n_mels: params.n_mels,
        floor_db: -params.top_db,
        ref_mode: params.ref_mode,
    })
}

pub fn mel_spectrogram_db(
    samples: &[f64],
    sample_rate: u32,
    frame: &FrameParams,
    params: &MelParams,
) -> Result<MelSpectrogramDb, DspError> {
    let power = stft_power(samples, sample_rate, frame)?;
    mel_db_from_power(&power, params)
}
