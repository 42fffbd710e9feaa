//! CART decision trees and a bagged random forest with soft voting.
//!
//! Every tree draws from its own ChaCha stream keyed by `(seed, tree index)`,
//! so a trained model does not depend on how many threads built it.

mod model;
mod tree;

pub use model::{
    predict_label, predict_proba, train_forest, FeatureSchema, ForestModel, MODEL_VERSION,
};
pub use tree::{best_split, gini_impurity, grow_tree, DecisionTree, LeafViolation, Node, Split};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::Label;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature dimension {dimension} is smaller than max_features {max_features}")]
    DimensionTooSmall {
        dimension: usize,
        max_features: usize,
    },
    #[error("training row {row} ({clip_id}) has no label")]
    MissingLabel { row: usize, clip_id: String },
    #[error("training rows differ in length: row {row} has {found}, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("gini impurity of an empty node")]
    EmptyNode,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("non-finite feature value at index {index} ({name})")]
    NonFiniteFeature { index: usize, name: String },
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u64),
    #[error("malformed model document: {0}")]
    Malformed(String),
}

/// Hyperparameters. Defaults are the fixed screening configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub min_weight_fraction_leaf: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 56,
            max_depth: 20_000,
            max_features: 15,
            min_samples_split: 10,
            min_samples_leaf: 20,
            min_weight_fraction_leaf: 0.1,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self, dimension: usize) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::InvalidParams(m));
        if self.n_estimators == 0 {
            return bad("n_estimators must be at least 1".into());
        }
        if self.max_features == 0 {
            return bad("max_features must be at least 1".into());
        }
        if self.max_features > dimension {
            return Err(ForestError::DimensionTooSmall {
                dimension,
                max_features: self.max_features,
            });
        }
        if !(0.0..0.5).contains(&self.min_weight_fraction_leaf) {
            return bad(format!(
                "min_weight_fraction_leaf must be in [0, 0.5), got {}",
                self.min_weight_fraction_leaf
            ));
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2".into());
        }
        Ok(())
    }

    /// Smallest row count a leaf may hold in a tree trained on `total` rows.
    pub fn min_leaf_rows(&self, total: usize) -> usize {
        let by_weight = (self.min_weight_fraction_leaf * total as f64).ceil() as usize;
        self.min_samples_leaf.max(by_weight)
    }
}

/// Labelled rows in row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    n_features: usize,
    values: Vec<f64>,
    labels: Vec<Label>,
}

impl TrainingSet {
    pub fn new(rows: &[Vec<f64>], labels: &[Label]) -> Result<Self, ForestError> {
        assert_eq!(rows.len(), labels.len(), "rows and labels differ in length");
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_features);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_features {
                return Err(ForestError::RaggedRows {
                    row: i,
                    found: r.len(),
                    expected: n_features,
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            n_features,
            values,
            labels: labels.to_vec(),
        })
    }

    /// Builds a set from labelled feature vectors; unlabelled rows are an error.
    pub fn from_vectors(vectors: &[FeatureVector]) -> Result<Self, ForestError> {
        let mut rows = Vec::with_capacity(vectors.len());
        let mut labels = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            let label = v.label.ok_or_else(|| ForestError::MissingLabel {
                row: i,
                clip_id: v.clip_id.clone(),
            })?;
            rows.push(v.values.clone());
            labels.push(label);
        }
        Self::new(&rows, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features + feature]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}
