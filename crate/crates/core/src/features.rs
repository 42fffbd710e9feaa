//! Per-clip descriptor assembly and the feature table file format.
//!
//! Layout of a vector: `mfcc_00..mfcc_{n-1}`, `chroma_00..chroma_11`, `rms`,
//! `spectral_centroid`, `spectral_bandwidth`, `spectral_rolloff`, `zcr`,
//! each the arithmetic mean of its per-frame stream.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{load_clip, AudioClip, AudioError, Manifest, CANONICAL_RATE};
use crate::dsp::{
    self, chroma, frame_stats, mel_db_from_power, mfcc, spectral_descriptors, stft_power, DspError,
    FrameParams, MelParams,
};
use crate::Label;

pub const SCHEMA_VERSION: u32 = 1;

const SCALAR_NAMES: [&str; 5] = [
    "rms",
    "spectral_centroid",
    "spectral_bandwidth",
    "spectral_rolloff",
    "zcr",
];
const META_COLUMNS: [&str; 3] = ["clip_id", "subject_id", "label"];
const CONFIG_PREFIX: &str = "# feature-config ";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip {clip_id}: {len} samples is shorter than one {n_fft}-sample frame")]
    ClipTooShort {
        clip_id: String,
        len: usize,
        n_fft: usize,
    },
    #[error("clip {clip_id}: non-finite value in {feature}")]
    NonFinite { clip_id: String, feature: String },
    #[error("clip {clip_id}: sample rate {actual} differs from configured {expected}")]
    RateMismatch {
        clip_id: String,
        actual: u32,
        expected: u32,
    },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("feature table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
}

/// Everything that determines a feature vector besides the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_mfcc: usize,
    pub frame: FrameParams,
    pub mel: MelParams,
    pub rolloff_pct: f64,
    pub aggregation: Aggregation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            sample_rate: CANONICAL_RATE,
            n_mfcc: 20,
            frame: FrameParams::default(),
            mel: MelParams::default(),
            rolloff_pct: 0.85,
            aggregation: Aggregation::Mean,
        }
    }
}

impl FeatureConfig {
    pub fn dimension(&self) -> usize {
        self.n_mfcc + 12 + SCALAR_NAMES.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n_mfcc).map(|i| format!("mfcc_{i:02}")).collect();
        names.extend((0..12).map(|i| format!("chroma_{i:02}")));
        names.extend(SCALAR_NAMES.iter().map(|s| s.to_string()));
        names
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        self.frame.validate()?;
        if self.sample_rate == 0 {
            return Err(FeatureError::InvalidConfig(
                "sample_rate must be positive".into(),
            ));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.mel.n_mels {
            return Err(FeatureError::InvalidConfig(format!(
                "n_mfcc must be in 1..={}, got {}",
                self.mel.n_mels, self.n_mfcc
            )));
        }
        if !(self.rolloff_pct > 0.0 && self.rolloff_pct <= 1.0) {
            return Err(FeatureError::InvalidConfig(format!(
                "rolloff_pct must be in (0, 1], got {}",
                self.rolloff_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub clip_id: String,
    pub subject_id: String,
    pub label: Option<Label>,
    pub values: Vec<f64>,
    pub schema_version: u32,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Computes the fixed-order descriptor of one clip.
pub fn extract_features(
    clip: &AudioClip,
    config: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    config.validate()?;
    let samples = clip.samples();
    if samples.len() < config.frame.n_fft {
        return Err(FeatureError::ClipTooShort {
            clip_id: clip.clip_id.clone(),
            len: samples.len(),
            n_fft: config.frame.n_fft,
        });
    }
    if clip.sample_rate() != config.sample_rate {
        return Err(FeatureError::RateMismatch {
            clip_id: clip.clip_id.clone(),
            actual: clip.sample_rate(),
            expected: config.sample_rate,
        });
    }

    let power = stft_power(samples, clip.sample_rate(), &config.frame)?;
    let mel_db = mel_db_from_power(&power, &config.mel)?;
    let cepstrum = mfcc(&mel_db, config.n_mfcc)?;
    let pitch = chroma(&power);
    let shape = spectral_descriptors(&power, config.rolloff_pct)?;
    let stats = frame_stats(samples, &config.frame)?;

    let mut values = Vec::with_capacity(config.dimension());
    values.extend(cepstrum.row_means());
    values.extend(pitch.row_means());
    values.push(mean(stats.iter().map(|s| s.rms)));
    values.push(mean(shape.iter().map(|s| s.centroid)));
    values.push(mean(shape.iter().map(|s| s.bandwidth)));
    values.push(mean(shape.iter().map(|s| s.rolloff)));
    values.push(mean(stats.iter().map(|s| s.zcr)));

    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            clip_id: clip.clip_id.clone(),
            feature: config.feature_names()[i].clone(),
        });
    }
    Ok(FeatureVector {
        clip_id: clip.clip_id.clone(),
        subject_id: clip.subject_id.clone(),
        label: clip.label,
        values,
        schema_version: SCHEMA_VERSION,
    })
}

/// Loads and extracts every manifest clip in parallel; output follows
/// manifest order. Relative paths resolve against `base_dir`.
pub fn extract_manifest(
    manifest: &Manifest,
    base_dir: &Path,
    config: &FeatureConfig,
) -> Result<Vec<FeatureVector>, FeatureError> {
    manifest
        .entries()
        .par_iter()
        .map(|e| {
            let path = base_dir.join(&e.path);
            let clip = load_clip(
                &path,
                e.clip_id.clone(),
                e.subject_id.clone(),
                Some(e.label),
                config.sample_rate,
            )?;
            extract_features(&clip, config)
        })
        .collect()
}

/// Feature vectors plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub config: FeatureConfig,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureTable {
    pub fn names(&self) -> Vec<String> {
        self.config.feature_names()
    }

    /// CSV with a leading `# feature-config {json}` comment, a header row of
    /// schema names, and shortest round-trip decimals.
    pub fn to_csv(&self) -> Result<String, FeatureError> {
        let names = self.names();
        let mut out = String::new();
        out.push_str(CONFIG_PREFIX);
        out.push_str(&serde_json::to_string(&self.config).expect("config serializes"));
        out.push('\n');
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let header: Vec<&str> = META_COLUMNS
            .iter()
            .copied()
            .chain(names.iter().map(String::as_str))
            .collect();
        writer.write_record(&header).map_err(table_write_err)?;
        for (row, v) in self.vectors.iter().enumerate() {
            if v.values.len() != names.len() {
                return Err(FeatureError::SchemaMismatch(format!(
                    "vector {} has {} values, schema has {}",
                    v.clip_id,
                    v.values.len(),
                    names.len()
                )));
            }
            if let Some(i) = v.values.iter().position(|x| !x.is_finite()) {
                return Err(FeatureError::NonFinite {
                    clip_id: v.clip_id.clone(),
                    feature: format!("{} (row {})", names[i], row + 1),
                });
            }
            let label = v.label.map_or("", Label::as_str);
            let mut record = vec![v.clip_id.clone(), v.subject_id.clone(), label.to_string()];
            record.extend(v.values.iter().map(|x| format!("{x:?}")));
            writer.write_record(&record).map_err(table_write_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| FeatureError::Table {
            line: 0,
            message: e.to_string(),
        })?;
        out.push_str(&String::from_utf8(bytes).expect("CSV output is UTF-8"));
        Ok(out)
    }

    /// Parses a feature table. Without a config comment the defaults are
    /// assumed, with `n_mfcc` taken from the header.
    pub fn from_csv(text: &str) -> Result<Self, FeatureError> {
        let config = match text.lines().next() {
            Some(first) if first.starts_with(CONFIG_PREFIX) => {
                serde_json::from_str::<FeatureConfig>(&first[CONFIG_PREFIX.len()..]).map_err(
                    |e| FeatureError::Table {
                        line: 1,
                        message: format!("bad feature config: {e}"),
                    },
                )?
            }
            _ => FeatureConfig::default(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| FeatureError::Table {
                line: 1,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 3 || header[..3] != META_COLUMNS {
            return Err(FeatureError::SchemaMismatch(format!(
                "header must start with clip_id,subject_id,label, got {}",
                header.join(",")
            )));
        }
        let mut config = config;
        if !text.starts_with(CONFIG_PREFIX) {
            config.n_mfcc = header.iter().filter(|h| h.starts_with("mfcc_")).count();
        }
        config.validate()?;
        let names = config.feature_names();
        if header[3..] != names[..] {
            return Err(FeatureError::SchemaMismatch(format!(
                "header columns do not match the {}-dimensional schema of the declared config",
                names.len()
            )));
        }

        let mut vectors = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| FeatureError::Table {
                line: 0,
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != header.len() {
                return Err(FeatureError::Table {
                    line,
                    message: format!(
                        "ragged row: {} fields under a {}-column header",
                        record.len(),
                        header.len()
                    ),
                });
            }
            let label = match &record[2] {
                "" => None,
                s => Some(
                    s.parse::<Label>()
                        .map_err(|m| FeatureError::Table { line, message: m })?,
                ),
            };
            let values = record
                .iter()
                .skip(3)
                .zip(&names)
                .map(|(s, name)| match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(FeatureError::Table {
                        line,
                        message: format!("invalid value {s:?} for {name}"),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            vectors.push(FeatureVector {
                clip_id: record[0].to_string(),
                subject_id: record[1].to_string(),
                label,
                values,
                schema_version: SCHEMA_VERSION,
            });
        }
        Ok(Self { config, vectors })
    }
}

fn table_write_err(e: csv::Error) -> FeatureError {
    FeatureError::Table {
        line: 0,
        message: e.to_string(),
    }
}

/// Mel spectrogram of a clip under a feature config, for export.
pub fn clip_mel_db(
    clip: &AudioClip,
    config: &FeatureConfig,
) -> Result<dsp::MelSpectrogramDb, FeatureError> {
    let power = stft_power(clip.samples(), clip.sample_rate(), &config.frame)?;
    Ok(mel_db_from_power(&power, &config.mel)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone_clip(freq: f64, amp: f64, secs: f64) -> AudioClip {
        let sr = CANONICAL_RATE;
        let n = (secs * sr as f64) as usize;
        let x = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip::new("c1", "s1", Some(Label::Nt), x, sr).unwrap()
    }

    #[test]
    fn default_names() {
        let names = FeatureConfig::default().feature_names();
        assert_eq!(names.len(), 37);
        assert_eq!(names[0], "mfcc_00");
        assert_eq!(names[19], "mfcc_19");
        assert_eq!(names[20], "chroma_00");
        assert_eq!(names[31], "chroma_11");
        assert_eq!(
            &names[32..],
            &[
                "rms",
                "spectral_centroid",
                "spectral_bandwidth",
                "spectral_rolloff",
                "zcr"
            ]
        );
    }

    #[test]
    fn shape_and_determinism() {
        let clip = tone_clip(440.0, 0.5, 1.0);
        let cfg = FeatureConfig::default();
        let a = extract_features(&clip, &cfg).unwrap();
        let b = extract_features(&clip, &cfg).unwrap();
        assert_eq!(a.values.len(), 37);
        assert_eq!(a.values, b.values);
        assert_eq!(a.schema_version, SCHEMA_VERSION);
    }

    #[test]
    fn tone_lands_on_pitch_class_a() {
        let v = extract_features(&tone_clip(440.0, 0.5, 1.0), &FeatureConfig::default()).unwrap();
        let chroma = &v.values[20..32];
        let argmax = (0..12)
            .max_by(|&a, &b| chroma[a].total_cmp(&chroma[b]))
            .unwrap();
        assert_eq!(argmax, 9);
        let (centroid, bandwidth) = (v.values[33], v.values[34]);
        assert!(bandwidth < 0.1 * centroid, "{bandwidth} vs {centroid}");
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new("c", "s", None, vec![0.1; 2047], CANONICAL_RATE).unwrap();
        assert!(matches!(
            extract_features(&clip, &FeatureConfig::default()),
            Err(FeatureError::ClipTooShort { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let cfg = FeatureConfig::default();
        let vectors: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector {
                clip_id: format!("c{i}"),
                subject_id: "s,1".into(),
                label: if i == 2 { None } else { Some(Label::Asd) },
                values: (0..37).map(|j| (i * 37 + j) as f64 / 7.0 - 1e-9).collect(),
                schema_version: SCHEMA_VERSION,
            })
            .collect();
        let table = FeatureTable {
            config: cfg,
            vectors,
        };
        let text = table.to_csv().unwrap();
        let back = FeatureTable::from_csv(&text).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.to_csv().unwrap(), text);
    }

    #[test]
    fn empty_table() {
        let table = FeatureTable {
            config: FeatureConfig::default(),
            vectors: vec![],
        };
        let text = table.to_csv().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(FeatureTable::from_csv(&text).unwrap().vectors.is_empty());
    }

    #[test]
    fn ragged_row_rejected() {
        let cfg = FeatureConfig::default();
        let header = format!(
            "clip_id,subject_id,label,{}\n",
            cfg.feature_names().join(",")
        );
        let row = format!("c1,s1,ASD,{}\n", vec!["0.5"; 36].join(","));
        let err = FeatureTable::from_csv(&(header + &row)).unwrap_err();
        assert!(err.to_string().contains("ragged"), "{err}");
    }

    #[test]
    fn schema_mismatch_with_declared_config() {
        let table = FeatureTable {
            config: FeatureConfig::default(),
            vectors: vec![],
        };
        let text = table.to_csv().unwrap().replace("mfcc_19,", "");
        assert!(matches!(
            FeatureTable::from_csv(&text),
            Err(FeatureError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn non_finite_never_written() {
        let table = FeatureTable {
            config: FeatureConfig::default(),
            vectors: vec![FeatureVector {
                clip_id: "c".into(),
                subject_id: "s".into(),
                label: None,
                values: {
                    let mut v = vec![0.0; 37];
                    v[5] = f64::NAN;
                    v
                },
                schema_version: SCHEMA_VERSION,
            }],
        };
        assert!(matches!(
            table.to_csv(),
            Err(FeatureError::NonFinite { .. })
        ));
    }
}
