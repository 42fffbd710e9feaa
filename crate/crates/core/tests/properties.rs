use std::f64::consts::PI;

use proptest::prelude::*;

use prosody_screen::audio_io::{decode_wav, encode_wav, WavEncoding};
use prosody_screen::dsp::{
    frame_stats, mel_spectrogram_db, mfcc, spectral_descriptors, stft_power, FrameParams,
    MelParams, Window,
};
use prosody_screen::features::{FeatureConfig, FeatureTable, FeatureVector};
use prosody_screen::forest::{train_forest, FeatureSchema, ForestParams, Node, TrainingSet};
use prosody_screen::metrics::roc_auc;
use prosody_screen::Label;

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 64..max_len)
}

fn small_frame() -> FrameParams {
    FrameParams {
        n_fft: 64,
        hop: 16,
        window: Window::Hann,
        center: true,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval_holds_per_frame(x in signal(600)) {
        let params = FrameParams { n_fft: 64, hop: 32, window: Window::Rectangular, center: false };
        let spec = stft_power(&x, 8000, &params).unwrap();
        for t in 0..spec.n_frames() {
            let energy: f64 = x[t * 32..t * 32 + 64].iter().map(|v| v * v).sum();
            let mut full = 0.0;
            for k in 0..spec.n_bins() {
                let edge = k == 0 || k == 32;
                full += spec.bins.get(k, t) * if edge { 1.0 } else { 2.0 };
            }
            prop_assert!((energy - full / 64.0).abs() <= 1e-9 * energy.max(1.0));
        }
    }

    #[test]
    fn mfcc_ignores_gain(x in signal(2000), gain in 0.01f64..50.0) {
        let mel = MelParams { n_mels: 16, ..MelParams::default() };
        let a = mfcc(&mel_spectrogram_db(&x, 8000, &small_frame(), &mel).unwrap(), 8).unwrap();
        let y: Vec<f64> = x.iter().map(|v| v * gain).collect();
        let b = mfcc(&mel_spectrogram_db(&y, 8000, &small_frame(), &mel).unwrap(), 8).unwrap();
        for (p, q) in a.iter().zip(b.iter()) {
            prop_assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn descriptors_stay_in_band(x in signal(1500), pct in 0.05f64..1.0) {
        let spec = stft_power(&x, 8000, &small_frame()).unwrap();
        for d in spectral_descriptors(&spec, pct).unwrap() {
            prop_assert!((0.0..=4000.0).contains(&d.centroid));
            prop_assert!((0.0..=4000.0).contains(&d.rolloff));
            prop_assert!(d.bandwidth >= 0.0 && d.bandwidth.is_finite());
        }
    }

    #[test]
    fn rolloff_is_monotone_in_percentage(x in signal(1500), lo in 0.05f64..0.9, step in 0.0f64..0.1) {
        let spec = stft_power(&x, 8000, &small_frame()).unwrap();
        let a = spectral_descriptors(&spec, lo).unwrap();
        let b = spectral_descriptors(&spec, lo + step).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!(p.rolloff <= q.rolloff);
        }
    }

    #[test]
    fn frame_stats_bounds(x in signal(1500)) {
        for s in frame_stats(&x, &small_frame()).unwrap() {
            prop_assert!((0.0..=1.0).contains(&s.zcr));
            prop_assert!((0.0..=1.0).contains(&s.rms));
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_maps(
        scores in prop::collection::vec(0u8..12, 4..80),
        flips in prop::collection::vec(any::<bool>(), 80),
    ) {
        let mut labels: Vec<Label> = scores
            .iter()
            .zip(&flips)
            .map(|(_, f)| if *f { Label::Asd } else { Label::Nt })
            .collect();
        labels[0] = Label::Asd;
        labels[1] = Label::Nt;
        let raw: Vec<f64> = scores.iter().map(|&s| s as f64).collect();
        let mapped: Vec<f64> = raw.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
        let a = roc_auc(&labels, &raw).unwrap().auc;
        let b = roc_auc(&labels, &mapped).unwrap().auc;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        let negated: Vec<f64> = raw.iter().map(|s| -s).collect();
        let c = roc_auc(&labels, &negated).unwrap().auc;
        prop_assert!((a + c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wav_round_trip_is_exact_for_pcm16(codes in prop::collection::vec(any::<i16>(), 1..400)) {
        let samples: Vec<f64> = codes.iter().map(|&c| c as f64 / 32768.0).collect();
        let bytes = encode_wav(std::slice::from_ref(&samples), 16_000, WavEncoding::Pcm16).unwrap();
        let raw = decode_wav(&bytes).unwrap();
        prop_assert_eq!(&raw.channels[0], &samples);
        prop_assert_eq!(encode_wav(&raw.channels, raw.sample_rate, WavEncoding::Pcm16).unwrap(), bytes);
    }

    #[test]
    fn feature_csv_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL, 37)) {
        let table = FeatureTable {
            config: FeatureConfig::default(),
            vectors: vec![FeatureVector {
                clip_id: "c".into(),
                subject_id: "s".into(),
                label: Some(Label::Nt),
                values,
                schema_version: 1,
            }],
        };
        let csv = table.to_csv().unwrap();
        let back = FeatureTable::from_csv(&csv).unwrap();
        prop_assert_eq!(&back, &table);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Trees only compare values, so a strictly increasing remap of every
    /// feature grows the same trees up to threshold values.
    #[test]
    fn forest_is_order_isomorphic(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..37).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<Label> = rows
            .iter()
            .map(|r| if r[5] - r[9] > 0.0 { Label::Asd } else { Label::Nt })
            .collect();
        let warp = |r: &Vec<f64>| -> Vec<f64> { r.iter().map(|v| v.powi(3) + 2.0 * v).collect() };
        let warped: Vec<Vec<f64>> = rows.iter().map(warp).collect();
        let schema = FeatureSchema::from_config(&FeatureConfig::default());
        let params = ForestParams { n_estimators: 10, min_samples_leaf: 5, ..ForestParams::with_seed(seed) };
        let a = train_forest(&TrainingSet::new(&rows, &labels).unwrap(), schema.clone(), &params).unwrap();
        let b = train_forest(&TrainingSet::new(&warped, &labels).unwrap(), schema, &params).unwrap();
        // midpoints move under the warp, so compare structure node by node
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            prop_assert_eq!(ta.nodes.len(), tb.nodes.len());
            for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
                match (na, nb) {
                    (
                        Node::Split { feature: fa, left: la, right: ra, .. },
                        Node::Split { feature: fb, left: lb, right: rb, .. },
                    ) => prop_assert_eq!((fa, la, ra), (fb, lb, rb)),
                    (leaf_a @ Node::Leaf { .. }, leaf_b @ Node::Leaf { .. }) => {
                        prop_assert_eq!(leaf_a, leaf_b)
                    }
                    _ => prop_assert!(false, "node kinds differ"),
                }
            }
        }
    }
}

#[test]
fn bootstrap_covers_about_one_minus_inverse_e() {
    // one ASD row among NT rows; trees that never split expose the bootstrap
    // share of that row directly through the leaf probability
    let n = 50;
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64; 37]).collect();
    let labels: Vec<Label> = (0..n)
        .map(|i| if i == 0 { Label::Asd } else { Label::Nt })
        .collect();
    let data = TrainingSet::new(&rows, &labels).unwrap();
    let params = ForestParams {
        n_estimators: 1000,
        min_samples_split: n + 1,
        ..ForestParams::with_seed(3)
    };
    let model = train_forest(
        &data,
        FeatureSchema::from_config(&FeatureConfig::default()),
        &params,
    )
    .unwrap();
    let present = model
        .trees
        .iter()
        .filter(|t| t.predict_asd(&rows[0]) > 0.0)
        .count() as f64
        / 1000.0;
    let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
    assert!((present - expected).abs() < 0.05, "{present} vs {expected}");
}

#[test]
fn sine_descriptors_track_frequency() {
    let sr = 8000;
    let x: Vec<f64> = (0..4000)
        .map(|i| (2.0 * PI * 1000.0 * i as f64 / sr as f64).sin())
        .collect();
    let params = FrameParams {
        n_fft: 256,
        hop: 64,
        window: Window::Hann,
        center: false,
    };
    let spec = stft_power(&x, sr, &params).unwrap();
    for d in spectral_descriptors(&spec, 0.85).unwrap() {
        assert!((d.centroid - 1000.0).abs() < 31.25);
    }
}
