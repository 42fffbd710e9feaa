use super::{Matrix, PowerSpectrogram};

/// Pitch class of `hz` with A440 tuning; 0 = C, 9 = A.
pub fn pitch_class_of(hz: f64) -> usize {
    let semitones_from_a = (12.0 * (hz / 440.0).log2()).round() as i64;
    (semitones_from_a + 9).rem_euclid(12) as usize
}

/// 12 x frames pitch-class profile, each frame scaled so its peak is 1.
///
/// The DC bin carries no pitch and is ignored. Silent frames stay zero.
pub fn chroma(power: &PowerSpectrogram) -> Matrix {
    let classes: Vec<Option<usize>> = (0..power.n_bins())
        .map(|k| match k {
            0 => None,
            _ => Some(pitch_class_of(power.bin_frequency(k))),
        })
        .collect();
    let frames = power.n_frames();
    let mut out = Matrix::zeros(12, frames);
    for (k, class) in classes.iter().enumerate() {
        if let Some(c) = class {
            let dst = out.row_mut(*c);
            for (d, s) in dst.iter_mut().zip(power.bins.row(k)) {
                *d += s;
            }
        }
    }
    for t in 0..frames {
        let peak = out.column(t).fold(0.0, f64::max);
        if peak > 0.0 {
            for c in 0..12 {
                out.set(c, t, out.get(c, t) / peak);
            }
        }
    }
    out
}
