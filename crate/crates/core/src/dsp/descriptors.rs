use super::stft::for_each_frame;
use super::{DspError, FrameParams, PowerSpectrogram};

/// Per-frame power-weighted spectral shape, all in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralShape {
    pub centroid: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
}

/// Centroid, bandwidth and rolloff for every frame. Silent frames give zeros.
pub fn spectral_descriptors(
    power: &PowerSpectrogram,
    rolloff_pct: f64,
) -> Result<Vec<SpectralShape>, DspError> {
    if !(rolloff_pct > 0.0 && rolloff_pct <= 1.0) {
        return Err(DspError::InvalidParameter(format!(
            "rolloff_pct must lie in (0, 1], got {rolloff_pct}"
        )));
    }
    let freqs = power.frequencies();
    let mut column = vec![0.0; power.n_bins()];
    let out = (0..power.n_frames())
        .map(|t| {
            for (k, c) in column.iter_mut().enumerate() {
                *c = power.bins.get(k, t);
            }
            let total: f64 = column.iter().sum();
            if total <= 0.0 {
                return SpectralShape {
                    centroid: 0.0,
                    bandwidth: 0.0,
                    rolloff: 0.0,
                };
            }
            let centroid = column.iter().zip(&freqs).map(|(p, f)| p * f).sum::<f64>() / total;
            let spread = column
                .iter()
                .zip(&freqs)
                .map(|(p, f)| p * (f - centroid).powi(2))
                .sum::<f64>()
                / total;
            let threshold = rolloff_pct * total;
            let mut cumulative = 0.0;
            let mut rolloff = freqs[freqs.len() - 1];
            for (p, f) in column.iter().zip(&freqs) {
                cumulative += p;
                if cumulative >= threshold {
                    rolloff = *f;
                    break;
                }
            }
            SpectralShape {
                centroid,
                bandwidth: spread.sqrt(),
                rolloff,
            }
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    /// Fraction of adjacent sample pairs whose sign differs.
    pub zcr: f64,
    pub rms: f64,
}

/// Zero-crossing rate and RMS over the same frames as the STFT, unwindowed.
pub fn frame_stats(samples: &[f64], params: &FrameParams) -> Result<Vec<FrameStats>, DspError> {
    let mut out = Vec::new();
    for_each_frame(samples, params, |_, frame| {
        let crossings = frame
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count();
        let energy: f64 = frame.iter().map(|v| v * v).sum();
        out.push(FrameStats {
            zcr: crossings as f64 / (frame.len() - 1) as f64,
            rms: (energy / frame.len() as f64).sqrt(),
        });
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft_power, Matrix, Window};
    use std::f64::consts::PI;

    fn spectrum(columns: Vec<Vec<f64>>, sample_rate: u32, n_fft: usize) -> PowerSpectrogram {
        let n_bins = columns[0].len();
        let frames = columns.len();
        let mut bins = Matrix::zeros(n_bins, frames);
        for (t, col) in columns.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                bins.set(k, t, *v);
            }
        }
        PowerSpectrogram {
            bins,
            sample_rate,
            params: FrameParams {
                n_fft,
                hop: n_fft,
                window: Window::Rectangular,
                center: false,
            },
        }
    }

    #[test]
    fn point_mass() {
        let mut col = vec![0.0; 9];
        col[3] = 2.5;
        let spec = spectrum(vec![col], 8000, 16);
        let d = spectral_descriptors(&spec, 0.85).unwrap()[0];
        assert_eq!(d.centroid, 1500.0);
        assert_eq!(d.bandwidth, 0.0);
        assert_eq!(d.rolloff, 1500.0);
    }

    #[test]
    fn full_rolloff_is_highest_nonzero_bin() {
        let col = vec![1.0, 0.0, 3.0, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0];
        let spec = spectrum(vec![col], 8000, 16);
        let d = spectral_descriptors(&spec, 1.0).unwrap()[0];
        assert_eq!(d.rolloff, 2000.0);
        let half = spectral_descriptors(&spec, 0.5).unwrap()[0];
        assert_eq!(half.rolloff, 1000.0);
    }

    #[test]
    fn silent_frame_is_zero() {
        let spec = spectrum(vec![vec![0.0; 9]], 8000, 16);
        let d = spectral_descriptors(&spec, 0.85).unwrap()[0];
        assert_eq!((d.centroid, d.bandwidth, d.rolloff), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bad_rolloff_pct() {
        let spec = spectrum(vec![vec![1.0; 9]], 8000, 16);
        assert!(spectral_descriptors(&spec, 0.0).is_err());
        assert!(spectral_descriptors(&spec, 1.5).is_err());
    }

    #[test]
    fn hann_tone_centroid() {
        let sr = 22_050;
        let x: Vec<f64> = (0..sr)
            .map(|i| (2.0 * PI * 1000.0 * i as f64 / sr as f64).sin())
            .collect();
        let params = FrameParams::default();
        let spec = stft_power(&x, sr as u32, &params).unwrap();
        let bin_width = sr as f64 / params.n_fft as f64;
        let shape = spectral_descriptors(&spec, 0.85).unwrap();
        for d in &shape {
            assert!((d.centroid - 1000.0).abs() < bin_width, "{}", d.centroid);
        }
        // edge frames see the reflection kink; interior ones a clean line
        for d in &shape[4..shape.len() - 4] {
            assert!(d.bandwidth < bin_width, "{}", d.bandwidth);
        }
    }

    #[test]
    fn constant_frame_stats() {
        let params = FrameParams {
            n_fft: 64,
            hop: 32,
            window: Window::Hann,
            center: false,
        };
        for s in frame_stats(&vec![0.3; 256], &params).unwrap() {
            assert_eq!(s.zcr, 0.0);
            assert!((s.rms - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn alternating_signal_crosses_every_pair() {
        let params = FrameParams {
            n_fft: 64,
            hop: 64,
            window: Window::Rectangular,
            center: false,
        };
        let x: Vec<f64> = (0..128)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        for s in frame_stats(&x, &params).unwrap() {
            assert_eq!(s.zcr, 1.0);
            assert_eq!(s.rms, 1.0);
        }
    }

    #[test]
    fn sine_rms() {
        // 100 Hz at 8 kHz: 80 samples per period, frames of 800 hold 10 periods
        let params = FrameParams {
            n_fft: 800,
            hop: 400,
            window: Window::Hann,
            center: false,
        };
        let amp = 0.8;
        let x: Vec<f64> = (0..8000)
            .map(|i| amp * (2.0 * PI * 100.0 * i as f64 / 8000.0).sin())
            .collect();
        for s in frame_stats(&x, &params).unwrap() {
            assert!((s.rms - amp / 2f64.sqrt()).abs() < 1e-3);
        }
    }
}
