//! Subject-grouped fold assignment and cross-validated evaluation.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::Manifest;
use crate::features::{FeatureConfig, FeatureTable, FeatureVector};
use crate::forest::{
    predict_label, train_forest, FeatureSchema, ForestError, ForestModel, ForestParams, TrainingSet,
};
use crate::metrics::{
    aggregate_folds, confusion_and_scores, roc_auc, AggregateMetrics, Averaging, FoldMetrics,
    MetricsError,
};
use crate::Label;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("subject {subject} is split across folds {first} and {second}")]
    SplitSubject {
        subject: String,
        first: usize,
        second: usize,
    },
    #[error("fold index {fold} is out of range for k = {k}")]
    FoldOutOfRange { fold: usize, k: usize },
    #[error("subject {0} has no fold assignment")]
    UnassignedSubject(String),
    #[error("fold table names subject {0}, which is not in the manifest")]
    UnknownSubject(String),
    #[error("no features for clip {0}")]
    MissingFeatures(String),
    #[error("clip {clip_id}: feature table says {table}, manifest says {manifest}")]
    LabelConflict {
        clip_id: String,
        table: Label,
        manifest: Label,
    },
    #[error("fold {0} has no test clips")]
    EmptyFold(usize),
    #[error("fold CSV line {line}: {message}")]
    FoldTable { line: usize, message: String },
    #[error("fold {fold}: {source}")]
    Training {
        fold: usize,
        #[source]
        source: ForestError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FoldCounts {
    pub nt: usize,
    pub asd: usize,
}

impl FoldCounts {
    pub fn total(&self) -> usize {
        self.nt + self.asd
    }

    fn add(&mut self, label: Label, n: usize) {
        match label {
            Label::Asd => self.asd += n,
            Label::Nt => self.nt += n,
        }
    }
}

/// Subject-to-fold mapping. Every subject lives in exactly one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: Option<u64>,
    /// Subjects in manifest order.
    subject_folds: Vec<(String, usize)>,
    lookup: HashMap<String, usize>,
    counts: Vec<FoldCounts>,
}

impl FoldAssignment {
    fn build(
        manifest: &Manifest,
        k: usize,
        seed: Option<u64>,
        lookup: HashMap<String, usize>,
    ) -> Result<Self, CvError> {
        let mut counts = vec![FoldCounts::default(); k];
        let mut subject_folds = Vec::new();
        for (subject, label, n) in manifest.subjects() {
            let fold = *lookup
                .get(&subject)
                .ok_or_else(|| CvError::UnassignedSubject(subject.clone()))?;
            if fold >= k {
                return Err(CvError::FoldOutOfRange { fold, k });
            }
            counts[fold].add(label, n);
            subject_folds.push((subject, fold));
        }
        if let Some(extra) = lookup
            .keys()
            .filter(|s| !subject_folds.iter().any(|(m, _)| m == *s))
            .min()
        {
            return Err(CvError::UnknownSubject(extra.clone()));
        }
        Ok(Self {
            k,
            seed,
            subject_folds,
            lookup,
            counts,
        })
    }

    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.lookup.get(subject).copied()
    }

    pub fn subject_folds(&self) -> &[(String, usize)] {
        &self.subject_folds
    }

    pub fn counts(&self) -> &[FoldCounts] {
        &self.counts
    }

    /// Subjects held out in fold `f`.
    pub fn subjects_in(&self, fold: usize) -> HashSet<&str> {
        self.subject_folds
            .iter()
            .filter(|(_, f)| *f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// Manifest indices of the training and test sides of fold `f`.
    pub fn split(&self, manifest: &Manifest, fold: usize) -> (Vec<usize>, Vec<usize>) {
        manifest
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| (i, self.fold_of(&e.subject_id) == Some(fold)))
            .fold(
                (Vec::new(), Vec::new()),
                |(mut train, mut test), (i, held)| {
                    if held {
                        test.push(i);
                    } else {
                        train.push(i);
                    }
                    (train, test)
                },
            )
    }

    /// `subject_id,fold` rows after a `# k=.. seed=..` comment.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# k={}", self.k);
        if let Some(seed) = self.seed {
            let _ = write!(out, " seed={seed}");
        }
        out.push_str("\nsubject_id,fold\n");
        for (s, f) in &self.subject_folds {
            let _ = writeln!(out, "{s},{f}");
        }
        out
    }

    /// Reads a fold CSV and checks it against `manifest`. `k` falls back to
    /// one more than the largest fold index when the file does not state it.
    pub fn from_csv(text: &str, manifest: &Manifest) -> Result<Self, CvError> {
        let table_err = |line: usize, message: String| CvError::FoldTable { line, message };
        let mut k = None;
        let mut seed = None;
        if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix("# ")) {
            for kv in first.split_whitespace() {
                match kv.split_once('=') {
                    Some(("k", v)) => k = v.parse::<usize>().ok(),
                    Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                    _ => {}
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| table_err(1, e.to_string()))?
            .clone();
        if header.iter().collect::<Vec<_>>() != ["subject_id", "fold"] {
            return Err(table_err(1, "header must be subject_id,fold".into()));
        }
        let mut lookup = HashMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| table_err(0, e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let fold: usize = record[1]
                .parse()
                .map_err(|_| table_err(line, format!("invalid fold {:?}", &record[1])))?;
            if let Some(prev) = lookup.insert(record[0].to_string(), fold) {
                if prev != fold {
                    return Err(CvError::SplitSubject {
                        subject: record[0].to_string(),
                        first: prev,
                        second: fold,
                    });
                }
            }
        }
        let k = k.unwrap_or_else(|| lookup.values().max().map_or(0, |m| m + 1));
        if k < 2 {
            return Err(CvError::InvalidK(k));
        }
        Self::build(manifest, k, seed, lookup)
    }
}

/// Places subjects into `k` folds keeping per-class clip counts level.
///
/// A fold column in the manifest is used verbatim once it is confirmed not
/// to split any subject. Otherwise subjects are taken largest first (equal
/// sizes in seeded random order), and each goes to the fold minimizing the
/// largest per-class deviation from `total / k`, then the summed squared
/// deviation; remaining ties are broken by the seeded generator.
pub fn assign_folds(manifest: &Manifest, k: usize, seed: u64) -> Result<FoldAssignment, CvError> {
    if k < 2 {
        return Err(CvError::InvalidK(k));
    }
    if manifest.has_folds() {
        let mut lookup: HashMap<String, usize> = HashMap::new();
        for e in manifest.entries() {
            let fold = e.fold.expect("fold column is all-or-nothing");
            if fold >= k {
                return Err(CvError::FoldOutOfRange { fold, k });
            }
            if let Some(&prev) = lookup.get(&e.subject_id) {
                if prev != fold {
                    return Err(CvError::SplitSubject {
                        subject: e.subject_id.clone(),
                        first: prev,
                        second: fold,
                    });
                }
            }
            lookup.insert(e.subject_id.clone(), fold);
        }
        return FoldAssignment::build(manifest, k, None, lookup);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = manifest.subjects();
    for label in [Label::Asd, Label::Nt] {
        let n = subjects.iter().filter(|s| s.1 == label).count();
        if n < k {
            warn!("only {n} {label} subjects for {k} folds; some folds will lack that class");
        }
    }
    subjects.shuffle(&mut rng);
    subjects.sort_by_key(|s| std::cmp::Reverse(s.2));

    let class = |l: Label| usize::from(l == Label::Asd);
    let mut totals = [0i64; 2];
    for (_, label, n) in &subjects {
        totals[class(*label)] += *n as i64;
    }
    // counts scaled by k so the targets total / k stay integral
    let kk = k as i64;
    let mut scaled = vec![[0i64; 2]; k];
    let mut lookup = HashMap::new();
    let mut ties = Vec::with_capacity(k);
    for (subject, label, n) in &subjects {
        let c = class(*label);
        let mut best: Option<(i64, i64)> = None;
        ties.clear();
        for f in 0..k {
            let mut max_dev = 0;
            let mut sum_sq = 0;
            for (g, row) in scaled.iter().enumerate() {
                for (cls, &v) in row.iter().enumerate() {
                    let v = if g == f && cls == c {
                        v + kk * *n as i64
                    } else {
                        v
                    };
                    let dev = (v - totals[cls]).abs();
                    max_dev = max_dev.max(dev);
                    sum_sq += dev * dev;
                }
            }
            let key = (max_dev, sum_sq);
            match best {
                Some(b) if key > b => {}
                Some(b) if key == b => ties.push(f),
                _ => {
                    best = Some(key);
                    ties.clear();
                    ties.push(f);
                }
            }
        }
        let fold = ties[rng.random_range(0..ties.len())];
        scaled[fold][c] += kk * *n as i64;
        lookup.insert(subject.clone(), fold);
    }
    FoldAssignment::build(manifest, k, Some(seed), lookup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRunConfig {
    pub forest: ForestParams,
    pub features: FeatureConfig,
    pub k: usize,
    pub seed: u64,
}

impl CvRunConfig {
    /// Fixed hyperparameters and default features, everything keyed by `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            forest: ForestParams::with_seed(seed),
            features: FeatureConfig::default(),
            k: 5,
            seed,
        }
    }
}

/// Forest seed for fold `f`, decorrelated from neighbouring folds.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub seed: u64,
    pub k: usize,
    pub config: CvRunConfig,
    pub fold_counts: Vec<FoldCounts>,
    pub folds: Vec<FoldMetrics>,
    pub aggregate: AggregateMetrics,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: EvalReport,
    /// One model per fold, in fold order.
    pub models: Vec<ForestModel>,
    pub assignment: FoldAssignment,
}

fn index_features<'a>(
    manifest: &Manifest,
    vectors: &'a [FeatureVector],
) -> Result<Vec<&'a FeatureVector>, CvError> {
    let by_id: HashMap<&str, &FeatureVector> =
        vectors.iter().map(|v| (v.clip_id.as_str(), v)).collect();
    manifest
        .entries()
        .iter()
        .map(|e| {
            let v = by_id
                .get(e.clip_id.as_str())
                .ok_or_else(|| CvError::MissingFeatures(e.clip_id.clone()))?;
            match v.label {
                Some(l) if l != e.label => Err(CvError::LabelConflict {
                    clip_id: e.clip_id.clone(),
                    table: l,
                    manifest: e.label,
                }),
                _ => Ok(*v),
            }
        })
        .collect()
}

/// Assigns folds with `config.seed` (or the manifest's fold column) and runs
/// the grouped evaluation.
pub fn run_cross_validation(
    manifest: &Manifest,
    table: &FeatureTable,
    config: &CvRunConfig,
) -> Result<CvOutcome, CvError> {
    let assignment = assign_folds(manifest, config.k, config.seed)?;
    run_with_assignment(manifest, table, &assignment, config)
}

/// Trains on every fold but one and scores the held-out fold, for each
/// fold. Labels come from the manifest.
pub fn run_with_assignment(
    manifest: &Manifest,
    table: &FeatureTable,
    assignment: &FoldAssignment,
    config: &CvRunConfig,
) -> Result<CvOutcome, CvError> {
    if assignment.k < 2 {
        return Err(CvError::InvalidK(assignment.k));
    }
    let vectors = index_features(manifest, &table.vectors)?;
    let labels: Vec<Label> = manifest.entries().iter().map(|e| e.label).collect();
    let schema = FeatureSchema::from_config(&table.config);

    let per_fold: Vec<(FoldMetrics, ForestModel)> = (0..assignment.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = assignment.split(manifest, fold);
            if test.is_empty() {
                return Err(CvError::EmptyFold(fold));
            }
            let rows: Vec<Vec<f64>> = train.iter().map(|&i| vectors[i].values.clone()).collect();
            let train_labels: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
            let data = TrainingSet::new(&rows, &train_labels)
                .map_err(|source| CvError::Training { fold, source })?;
            let params = ForestParams {
                seed: fold_seed(config.forest.seed, fold),
                ..config.forest
            };
            let model = train_forest(&data, schema.clone(), &params)
                .map_err(|source| CvError::Training { fold, source })?;

            let test_labels: Vec<Label> = test.iter().map(|&i| labels[i]).collect();
            let probs = test
                .iter()
                .map(|&i| model.score(&vectors[i].values))
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|source| CvError::Training { fold, source })?;
            let predicted: Vec<Label> = probs.iter().map(|&p| predict_label(p)).collect();
            let scores = confusion_and_scores(&test_labels, &predicted)?;
            let roc = match roc_auc(&test_labels, &probs) {
                Ok(r) => Some(r),
                Err(MetricsError::SingleClass) => None,
                Err(e) => return Err(e.into()),
            };
            Ok((
                FoldMetrics {
                    fold,
                    n_train: train.len(),
                    n_test: test.len(),
                    scores,
                    roc,
                },
                model,
            ))
        })
        .collect::<Result<_, _>>()?;

    let (folds, models): (Vec<FoldMetrics>, Vec<ForestModel>) = per_fold.into_iter().unzip();
    let aggregate = aggregate_folds(&folds, Averaging::Weighted)?;
    Ok(CvOutcome {
        report: EvalReport {
            report_version: REPORT_VERSION,
            seed: config.seed,
            k: assignment.k,
            config: *config,
            fold_counts: assignment.counts().to_vec(),
            folds,
            aggregate,
        },
        models,
        assignment: assignment.clone(),
    })
}
