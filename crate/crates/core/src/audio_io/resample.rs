use std::f64::consts::PI;

use super::{AudioError, RawAudio};

/// Kaiser window shape parameter.
pub const KAISER_BETA: f64 = 12.0;
/// Zero crossings of the sinc kernel kept on each side of the centre tap.
pub const ZERO_CROSSINGS: usize = 64;
/// Above this many distinct fractional phases the kernel is evaluated on
/// the fly instead of being tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

/// Sample-wise mean across channels.
pub fn mixdown(raw: &RawAudio) -> Vec<f64> {
    let n = raw.channels.len() as f64;
    match raw.channels.as_slice() {
        [] => Vec::new(),
        [only] => only.clone(),
        [first, rest @ ..] => {
            let mut out = first.clone();
            for ch in rest {
                for (o, s) in out.iter_mut().zip(ch) {
                    *o += s;
                }
            }
            out.iter_mut().for_each(|o| *o /= n);
            out
        }
    }
}

/// Mixes to mono and converts to `target_rate` with a Kaiser-windowed sinc.
///
/// Equal rates return the mixdown untouched. Output length is
/// `round(frames * target / source)`.
pub fn resample_mono(raw: &RawAudio, target_rate: u32) -> Result<Vec<f64>, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::InvalidRate(target_rate));
    }
    if raw.sample_rate == 0 {
        return Err(AudioError::InvalidRate(raw.sample_rate));
    }
    if raw.channels.is_empty() {
        return Err(AudioError::MalformedHeader("no channels".to_string()));
    }
    let mono = mixdown(raw);
    if raw.sample_rate == target_rate {
        return Ok(mono);
    }
    Ok(KaiserSincResampler::new(raw.sample_rate, target_rate).process(&mono))
}

/// Band-limited rational-ratio resampler.
#[derive(Debug, Clone)]
pub struct KaiserSincResampler {
    source_rate: u64,
    target_rate: u64,
    /// source / gcd
    step: u64,
    /// target / gcd, the number of distinct fractional phases
    phases: u64,
    cutoff: f64,
    half_width: f64,
    table: Option<Vec<Vec<f64>>>,
}

impl KaiserSincResampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        let (s, t) = (source_rate as u64, target_rate as u64);
        let g = gcd(s, t);
        let cutoff = (t as f64 / s as f64).min(1.0);
        let half_width = ZERO_CROSSINGS as f64 / cutoff;
        let mut r = Self {
            source_rate: s,
            target_rate: t,
            step: s / g,
            phases: t / g,
            cutoff,
            half_width,
            table: None,
        };
        if r.phases <= MAX_TABLE_PHASES {
            let table = (0..r.phases)
                .map(|p| r.taps(p as f64 / r.phases as f64))
                .collect();
            r.table = Some(table);
        }
        r
    }

    /// Kernel taps for input positions `floor(t) - reach ..= floor(t) + reach`
    /// where `frac = t - floor(t)`.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let reach = self.reach();
        (-reach..=reach)
            .map(|k| self.kernel(frac - k as f64))
            .collect()
    }

    fn reach(&self) -> i64 {
        self.half_width.ceil() as i64
    }

    fn kernel(&self, x: f64) -> f64 {
        let r = x / self.half_width;
        if r.abs() > 1.0 {
            return 0.0;
        }
        self.cutoff * sinc(self.cutoff * x) * kaiser(r, KAISER_BETA)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.target_rate as u128 * 2 + self.source_rate as u128)
            / (2 * self.source_rate as u128)) as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let out_len = self.output_len(input.len());
        let reach = self.reach();
        let n = input.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        let mut scratch: Vec<f64>;
        for m in 0..out_len as u64 {
            let num = m * self.step;
            let base = (num / self.phases) as i64;
            let phase = num % self.phases;
            let taps: &[f64] = match &self.table {
                Some(table) => &table[phase as usize],
                None => {
                    scratch = self.taps(phase as f64 / self.phases as f64);
                    &scratch
                }
            };
            let lo = base - reach;
            let mut acc = 0.0;
            for (j, w) in taps.iter().enumerate() {
                let idx = lo + j as i64;
                if idx >= 0 && idx < n {
                    acc += w * input[idx as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

fn kaiser(r: f64, beta: f64) -> f64 {
    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}
