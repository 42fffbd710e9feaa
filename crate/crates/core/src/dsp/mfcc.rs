use std::f64::consts::PI;

use super::{DspError, Matrix, MelSpectrogramDb};

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub fn dct_ii_orthonormal(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            let sum: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// Cepstral coefficients: per-frame orthonormal DCT-II along the mel axis.
pub fn mfcc(mel_db: &MelSpectrogramDb, n_mfcc: usize) -> Result<Matrix, DspError> {
    let n_mels = mel_db.bands.rows();
    if n_mfcc > n_mels {
        return Err(DspError::TooManyCoefficients { n_mfcc, n_mels });
    }
    if n_mfcc == 0 {
        return Err(DspError::InvalidParameter(
            "n_mfcc must be at least 1".into(),
        ));
    }
    // basis[k][m]
    let basis: Vec<Vec<f64>> = (0..n_mfcc)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_mels as f64).sqrt()
            } else {
                (2.0 / n_mels as f64).sqrt()
            };
            (0..n_mels)
                .map(|m| scale * (PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n_mels as f64)).cos())
                .collect()
        })
        .collect();
    let frames = mel_db.n_frames();
    let mut out = Matrix::zeros(n_mfcc, frames);
    for (k, b) in basis.iter().enumerate() {
        let dst = out.row_mut(k);
        for (m, &w) in b.iter().enumerate() {
            for (d, s) in dst.iter_mut().zip(mel_db.bands.row(m)) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}
