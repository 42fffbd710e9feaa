use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use prosody_screen::audio_io::{encode_wav, WavEncoding};
use prosody_screen::synth::{corpus_manifest, generate_corpus, CorpusSpec};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosody-screen"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_corpus(dir: &Path) {
    let clips = generate_corpus(&CorpusSpec {
        subjects_per_class: 5,
        clips_per_subject: 4,
        clip_secs: 0.4,
        ..CorpusSpec::separable(3)
    });
    for c in &clips {
        let bytes = encode_wav(
            &[c.clip.samples().to_vec()],
            c.clip.sample_rate(),
            WavEncoding::Pcm16,
        )
        .unwrap();
        fs::write(dir.join(&c.entry.path), bytes).unwrap();
    }
    fs::write(dir.join("manifest.csv"), corpus_manifest(&clips).to_csv()).unwrap();
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn help_exits_zero_and_bad_flags_exit_one() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["cv", "--bogus"]).status.code(), Some(1));
    assert_eq!(bin(&[]).status.code(), Some(1));
}

#[test]
fn folds_requires_seed() {
    let out = bin(&["folds", "--manifest", "m.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&[
        "folds",
        "--manifest",
        &path(tmp.path(), "nope.csv"),
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_forest_override_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin(&[
        "train",
        "--features",
        &path(tmp.path(), "f.csv"),
        "--seed",
        "1",
        "--min-weight-fraction-leaf",
        "0.9",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_corpus(dir);
    let manifest = path(dir, "manifest.csv");
    let features = path(dir, "features.csv");

    let out = bin(&[
        "extract",
        "--manifest",
        &manifest,
        "--out",
        &features,
        "--jobs",
        "2",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&features).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 41);

    // folds are a pure function of manifest and seed
    let a = bin(&["folds", "--manifest", &manifest, "--seed", "11"]);
    let b = bin(&["folds", "--manifest", &manifest, "--seed", "11"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let folds = String::from_utf8(a.stdout).unwrap();
    assert_eq!(folds.lines().filter(|l| !l.starts_with('#')).count(), 11);

    let out = bin(&[
        "cv",
        "--manifest",
        &manifest,
        "--features",
        &features,
        "--seed",
        "2",
        "--min-samples-leaf",
        "3",
        "--k",
        "5",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 5);
    assert_eq!(report["seed"], 2);
    let acc = report["aggregate"]["accuracy"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let model = path(dir, "model.json");
    let out = bin(&[
        "train",
        "--features",
        &features,
        "--seed",
        "4",
        "--out",
        &model,
        "--n-estimators",
        "20",
        "--min-samples-leaf",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let wav = path(dir, "asd_00_c00.wav");
    let out = bin(&["predict", "--model", &model, "--wav", &wav]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    assert_eq!(fields.len(), 3);
    assert_eq!(fields[0], "asd_00_c00");
    let p: f64 = fields[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(fields[2], if p >= 0.5 { "ASD" } else { "NT" });

    let out = bin(&["predict", "--model", &model, "--features", &features]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 40);

    let pgm = path(dir, "spec.pgm");
    let out = bin(&["spectrogram", "--wav", &wav, "--out", &pgm]);
    assert_eq!(out.status.code(), Some(0));
    assert!(fs::read(&pgm).unwrap().starts_with(b"P5\n"));
    let csv = path(dir, "spec.csv");
    assert_eq!(
        bin(&["spectrogram", "--wav", &wav, "--out", &csv])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 128);
}

#[test]
fn corrupt_model_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let model = path(tmp.path(), "model.json");
    fs::write(&model, "{\"version\": 99}").unwrap();
    let out = bin(&["predict", "--model", &model, "--features", &model]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn in_process_run_matches_binary_codes() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = prosody_screen::cli::run(
        ["prosody-screen", "folds", "--manifest", "x"],
        &mut out,
        &mut err,
    );
    assert_eq!(code, 1);
    assert!(!err.is_empty());
}
