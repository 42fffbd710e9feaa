use rustfft::num_complex::Complex;
use rustfft::FftPlannerScalar;

use super::{DspError, FrameParams, Matrix};

/// One-sided power spectrogram: `n_fft / 2 + 1` rows by `n_frames` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    pub bins: Matrix,
    pub sample_rate: u32,
    pub params: FrameParams,
}

impl PowerSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.cols()
    }

    pub fn n_bins(&self) -> usize {
        self.bins.rows()
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.params.n_fft as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|k| self.bin_frequency(k)).collect()
    }
}

/// Index into `samples` for padded position `i` under reflect padding.
fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let j = i.rem_euclid(period);
    if j >= len as i64 {
        (period - j) as usize
    } else {
        j as usize
    }
}

/// The signal as framed: reflect-padded by `n_fft / 2` on both sides when
/// centred, untouched otherwise.
pub(crate) fn padded_signal(samples: &[f64], params: &FrameParams) -> Result<Vec<f64>, DspError> {
    params.validate()?;
    if samples.is_empty() {
        return Err(DspError::EmptyInput);
    }
    if params.center {
        let pad = (params.n_fft / 2) as i64;
        let total = samples.len() as i64 + 2 * pad;
        Ok((0..total)
            .map(|i| samples[reflect_index(i - pad, samples.len())])
            .collect())
    } else if samples.len() < params.n_fft {
        Err(DspError::TooShort {
            len: samples.len(),
            n_fft: params.n_fft,
        })
    } else {
        Ok(samples.to_vec())
    }
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize, params: &FrameParams) -> usize {
    let padded = if params.center {
        len + 2 * (params.n_fft / 2)
    } else {
        len
    };
    if padded < params.n_fft {
        0
    } else {
        1 + (padded - params.n_fft) / params.hop
    }
}

/// Calls `f(t, frame)` for each unwindowed analysis frame.
pub(crate) fn for_each_frame(
    samples: &[f64],
    params: &FrameParams,
    mut f: impl FnMut(usize, &[f64]),
) -> Result<usize, DspError> {
    let padded = padded_signal(samples, params)?;
    let n_frames = frame_count(samples.len(), params);
    for t in 0..n_frames {
        let start = t * params.hop;
        f(t, &padded[start..start + params.n_fft]);
    }
    Ok(n_frames)
}

/// Short-time power spectrum `|DFT(window * frame)|^2`, bins `0..=n_fft/2`.
pub fn stft_power(
    samples: &[f64],
    sample_rate: u32,
    params: &FrameParams,
) -> Result<PowerSpectrogram, DspError> {
    if sample_rate == 0 {
        return Err(DspError::InvalidParameter(
            "sample rate must be positive".into(),
        ));
    }
    params.validate()?;
    let n = params.n_fft;
    let window = params.window.coefficients(n);
    // scalar planner: identical rounding on every CPU
    let fft = FftPlannerScalar::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let n_frames = frame_count(samples.len(), params);
    let mut bins = Matrix::zeros(params.n_bins(), n_frames);
    for_each_frame(samples, params, |t, frame| {
        for ((b, x), w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(params.n_bins()).enumerate() {
            bins.set(k, t, c.norm_sqr());
        }
    })?;
    Ok(PowerSpectrogram {
        bins,
        sample_rate,
        params: *params,
    })
}
