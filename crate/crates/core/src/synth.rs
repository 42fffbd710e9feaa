//! Synthetic voice-like corpora with controllable class structure.
//!
//! A clip is a harmonic tone whose fundamental follows a slow sinusoidal
//! intonation contour, plus a little white noise. Each subject gets a base
//! pitch and an intonation depth drawn from its class prior; clips of one
//! subject vary around those.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::{AudioClip, Manifest, ManifestEntry};
use crate::Label;

/// Per-class priors for the synthetic voice generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPrior {
    /// Uniform range of the subject's base pitch, Hz.
    pub pitch_range: (f64, f64),
    /// Uniform range of the relative intonation depth.
    pub intonation_depth: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub subjects_per_class: usize,
    pub clips_per_subject: usize,
    pub clip_secs: f64,
    pub sample_rate: u32,
    pub asd: ClassPrior,
    pub nt: ClassPrior,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    /// Range of a constant offset added to every clip of a subject.
    pub subject_dc_offset: (f64, f64),
    pub seed: u64,
}

impl CorpusSpec {
    /// Two well-separated classes: 40 subjects with 20 one-second clips each.
    pub fn separable(seed: u64) -> Self {
        Self {
            subjects_per_class: 20,
            clips_per_subject: 20,
            clip_secs: 1.0,
            sample_rate: crate::audio_io::CANONICAL_RATE,
            asd: ClassPrior {
                pitch_range: (340.0, 460.0),
                intonation_depth: (0.005, 0.02),
            },
            nt: ClassPrior {
                pitch_range: (190.0, 280.0),
                intonation_depth: (0.06, 0.12),
            },
            noise: 0.01,
            subject_dc_offset: (0.0, 0.0),
            seed,
        }
    }
}

/// A generated clip together with its manifest row.
#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub entry: ManifestEntry,
    pub clip: AudioClip,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Renders one clip: harmonics with 1/h amplitude under an intonation
/// contour, peak-normalized to `amplitude` before noise and offset.
pub fn voice_clip(
    rng: &mut ChaCha8Rng,
    sample_rate: u32,
    secs: f64,
    base_pitch: f64,
    depth: f64,
    noise: f64,
    offset: f64,
) -> Vec<f64> {
    let n = (secs * sample_rate as f64).round() as usize;
    let sr = sample_rate as f64;
    let contour_rate = rng.random_range(1.5..3.5);
    let contour_phase = rng.random_range(0.0..2.0 * PI);
    let amplitude = rng.random_range(0.3..0.6);
    let harmonics = 4;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = base_pitch * (1.0 + depth * (2.0 * PI * contour_rate * t + contour_phase).sin());
        phase += 2.0 * PI * f0 / sr;
        let v: f64 = (1..=harmonics)
            .map(|h| (h as f64 * phase).sin() / h as f64)
            .sum();
        out.push(v);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in out.iter_mut() {
        let gaussian = {
            // Box-Muller
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random::<f64>();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        };
        *v = (*v / peak * amplitude + noise * gaussian + offset).clamp(-1.0, 1.0);
    }
    out
}

/// Generates the corpus. Subject ids are `asd_NN` / `nt_NN`, clip ids
/// `<subject>_cNN`; `path` is `<clip_id>.wav`.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<SyntheticClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for s in 0..spec.subjects_per_class {
        for (label, prior) in [(Label::Asd, spec.asd), (Label::Nt, spec.nt)] {
            let subject = format!("{}_{s:02}", label.as_str().to_lowercase());
            let pitch = uniform(&mut rng, prior.pitch_range);
            let depth = uniform(&mut rng, prior.intonation_depth);
            let offset = uniform(&mut rng, spec.subject_dc_offset);
            for c in 0..spec.clips_per_subject {
                let clip_id = format!("{subject}_c{c:02}");
                let clip_pitch = pitch * rng.random_range(0.97..1.03);
                let samples = voice_clip(
                    &mut rng,
                    spec.sample_rate,
                    spec.clip_secs,
                    clip_pitch,
                    depth,
                    spec.noise,
                    offset,
                );
                let clip = AudioClip::new(
                    clip_id.clone(),
                    subject.clone(),
                    Some(label),
                    samples,
                    spec.sample_rate,
                )
                .expect("generated audio is valid");
                out.push(SyntheticClip {
                    entry: ManifestEntry {
                        path: format!("{clip_id}.wav"),
                        clip_id,
                        subject_id: subject.clone(),
                        label,
                        fold: None,
                    },
                    clip,
                });
            }
        }
    }
    out
}

pub fn corpus_manifest(clips: &[SyntheticClip]) -> Manifest {
    Manifest::new(clips.iter().map(|c| c.entry.clone()).collect())
        .expect("generated manifest is consistent")
}

/// Manifest whose subject labels are permuted (class balance preserved);
/// every clip inherits its subject's new label.
pub fn permute_subject_labels(manifest: &Manifest, seed: u64) -> Manifest {
    use rand::seq::SliceRandom;
    let subjects = manifest.subjects();
    let mut labels: Vec<Label> = subjects.iter().map(|s| s.1).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let relabel: std::collections::HashMap<&str, Label> = subjects
        .iter()
        .zip(&labels)
        .map(|(s, l)| (s.0.as_str(), *l))
        .collect();
    let entries = manifest
        .entries()
        .iter()
        .map(|e| ManifestEntry {
            label: relabel[e.subject_id.as_str()],
            ..e.clone()
        })
        .collect();
    Manifest::new(entries).expect("relabelled manifest is consistent")
}

/// Clip counts for a manifest of `n_subjects` whose classes each total
/// `clips_per_class`, with uneven per-subject counts.
pub fn uneven_subject_sizes(
    n_subjects: usize,
    clips_per_class: usize,
    seed: u64,
) -> Vec<(String, Label, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (label, n) in [
        (Label::Asd, n_subjects / 2),
        (Label::Nt, n_subjects - n_subjects / 2),
    ] {
        // random positive weights, then largest-remainder rounding
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        let sum: f64 = weights.iter().sum();
        let exact: Vec<f64> = weights
            .iter()
            .map(|w| w / sum * clips_per_class as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor().max(1.0) as usize).collect();
        let mut assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor()))
        });
        let mut i = 0;
        while assigned < clips_per_class {
            counts[order[i % n]] += 1;
            assigned += 1;
            i += 1;
        }
        while assigned > clips_per_class {
            let j = (0..n).max_by_key(|&j| counts[j]).unwrap();
            counts[j] -= 1;
            assigned -= 1;
        }
        for (i, c) in counts.into_iter().enumerate() {
            out.push((
                format!("{}_{i:02}", label.as_str().to_lowercase()),
                label,
                c,
            ));
        }
    }
    out
}
