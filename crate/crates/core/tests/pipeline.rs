use prosody_screen::audio_io::{AudioClip, CANONICAL_RATE};
use prosody_screen::cv::{assign_folds, run_cross_validation, CvRunConfig};
use prosody_screen::features::{extract_features, FeatureConfig, FeatureTable, FeatureVector};
use prosody_screen::synth::{corpus_manifest, generate_corpus, voice_clip, CorpusSpec};

fn small_spec(seed: u64) -> CorpusSpec {
    CorpusSpec {
        subjects_per_class: 5,
        clips_per_subject: 6,
        clip_secs: 0.4,
        ..CorpusSpec::separable(seed)
    }
}

fn table_for(spec: &CorpusSpec) -> (prosody_screen::audio_io::Manifest, FeatureTable) {
    let clips = generate_corpus(spec);
    let config = FeatureConfig::default();
    let vectors: Vec<FeatureVector> = clips
        .iter()
        .map(|c| extract_features(&c.clip, &config).unwrap())
        .collect();
    (corpus_manifest(&clips), FeatureTable { config, vectors })
}

#[test]
fn amplitude_scaling_moves_only_rms() {
    let config = FeatureConfig::default();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let base = voice_clip(&mut rng, CANONICAL_RATE, 0.5, 210.0, 0.08, 0.0, 0.0);
    let quiet: Vec<f64> = base.iter().map(|v| v * 0.25).collect();
    let a = extract_features(
        &AudioClip::new("a", "s", None, base, CANONICAL_RATE).unwrap(),
        &config,
    )
    .unwrap();
    let b = extract_features(
        &AudioClip::new("b", "s", None, quiet, CANONICAL_RATE).unwrap(),
        &config,
    )
    .unwrap();
    for i in 0..32 {
        assert!((a.values[i] - b.values[i]).abs() < 1e-6, "feature {i}");
    }
    assert!((b.values[32] - 0.25 * a.values[32]).abs() < 1e-9);
    for i in 33..37 {
        assert!(
            (a.values[i] - b.values[i]).abs() < 1e-6 * a.values[i].abs().max(1.0),
            "feature {i}"
        );
    }
}

#[test]
fn cross_validation_is_reproducible() {
    let (manifest, table) = table_for(&small_spec(21));
    let config = CvRunConfig {
        forest: prosody_screen::forest::ForestParams {
            min_samples_leaf: 3,
            ..prosody_screen::forest::ForestParams::with_seed(5)
        },
        ..CvRunConfig::with_seed(5)
    };
    let a = run_cross_validation(&manifest, &table, &config).unwrap();
    let b = run_cross_validation(&manifest, &table, &config).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    for (x, y) in a.models.iter().zip(&b.models) {
        assert_eq!(x.to_json(), y.to_json());
    }
    let folds = &a.report.folds;
    assert_eq!(
        folds.iter().map(|f| f.n_test).sum::<usize>(),
        manifest.len()
    );
    for f in folds {
        assert_eq!(f.n_train + f.n_test, manifest.len());
    }
}

#[test]
fn different_seeds_change_assignment() {
    let (manifest, _) = table_for(&small_spec(22));
    let a = assign_folds(&manifest, 5, 1).unwrap();
    let b = assign_folds(&manifest, 5, 2).unwrap();
    assert_ne!(a.to_csv(), b.to_csv());
}
