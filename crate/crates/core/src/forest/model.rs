use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::grow_tree;
use super::{DecisionTree, ForestError, ForestParams, TrainingSet};
use crate::features::{FeatureConfig, FeatureVector, SCHEMA_VERSION};
use crate::Label;

pub const MODEL_VERSION: u64 = 1;

/// Feature layout a model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub names: Vec<String>,
    pub positive_class: Label,
    /// Extraction settings, so raw audio can be scored with the model.
    pub extraction: FeatureConfig,
}

impl FeatureSchema {
    pub fn from_config(config: &FeatureConfig) -> Self {
        Self {
            version: SCHEMA_VERSION,
            names: config.feature_names(),
            positive_class: Label::Asd,
            extraction: *config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u64,
    pub params: ForestParams,
    pub schema: FeatureSchema,
    pub trees: Vec<DecisionTree>,
}

/// Per-tree generator: ChaCha8 keyed by the forest seed, stream = tree index.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Trains `n_estimators` trees, each on a same-size bootstrap resample.
///
/// Trees are grown on the current rayon pool; the result is identical for
/// any pool size.
pub fn train_forest(
    data: &TrainingSet,
    schema: FeatureSchema,
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    if data.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    params.validate(data.n_features())?;
    if schema.names.len() != data.n_features() {
        return Err(ForestError::SchemaMismatch(format!(
            "schema has {} names, training rows have {} values",
            schema.names.len(),
            data.n_features()
        )));
    }
    let n = data.len();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow_tree(data, sample, params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        version: MODEL_VERSION,
        params: *params,
        schema,
        trees,
    })
}

impl ForestModel {
    pub fn dimension(&self) -> usize {
        self.schema.names.len()
    }

    /// Mean leaf ASD fraction over trees for a raw value slice.
    pub fn score(&self, values: &[f64]) -> Result<f64, ForestError> {
        if values.len() != self.dimension() {
            return Err(ForestError::SchemaMismatch(format!(
                "vector has {} values, model expects {}",
                values.len(),
                self.dimension()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ForestError::NonFiniteFeature {
                index: i,
                name: self.schema.names[i].clone(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict_asd(values)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    /// Parses and fully validates a model document.
    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ForestError::Malformed(e.to_string()))?;
        match raw.get("version").and_then(serde_json::Value::as_u64) {
            Some(MODEL_VERSION) => {}
            Some(v) => return Err(ForestError::UnsupportedVersion(v)),
            None => return Err(ForestError::Malformed("missing version".into())),
        }
        let model: ForestModel =
            serde_json::from_value(raw).map_err(|e| ForestError::Malformed(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ForestError> {
        let dim = self.dimension();
        self.params.validate(dim)?;
        if self.schema.version != SCHEMA_VERSION {
            return Err(ForestError::SchemaMismatch(format!(
                "schema version {} is not {SCHEMA_VERSION}",
                self.schema.version
            )));
        }
        if self.schema.extraction.feature_names() != self.schema.names {
            return Err(ForestError::SchemaMismatch(
                "schema names disagree with the extraction config".into(),
            ));
        }
        if self.schema.positive_class != Label::Asd {
            return Err(ForestError::SchemaMismatch(
                "positive class must be ASD".into(),
            ));
        }
        if self.trees.len() != self.params.n_estimators {
            return Err(ForestError::Malformed(format!(
                "{} trees but n_estimators = {}",
                self.trees.len(),
                self.params.n_estimators
            )));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(dim)
                .map_err(|e| ForestError::Malformed(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Probability of ASD for a feature vector.
pub fn predict_proba(model: &ForestModel, vector: &FeatureVector) -> Result<f64, ForestError> {
    if vector.schema_version != model.schema.version {
        return Err(ForestError::SchemaMismatch(format!(
            "vector schema version {} differs from model schema version {}",
            vector.schema_version, model.schema.version
        )));
    }
    model.score(&vector.values)
}

/// ASD when the probability is at least one half.
pub fn predict_label(probability: f64) -> Label {
    if probability >= 0.5 {
        Label::Asd
    } else {
        Label::Nt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::Node;

    fn schema(dim: usize) -> FeatureSchema {
        let config = FeatureConfig {
            n_mfcc: dim - 17,
            ..FeatureConfig::default()
        };
        FeatureSchema::from_config(&config)
    }

    fn random_set(n: usize, dim: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let label = if row[0] + 0.3 * rng.random::<f64>() > 0.65 {
                Label::Asd
            } else {
                Label::Nt
            };
            rows.push(row);
            labels.push(label);
        }
        TrainingSet::new(&rows, &labels).unwrap()
    }

    #[test]
    fn constant_leaf_forest() {
        let tree = DecisionTree {
            nodes: vec![Node::Leaf {
                p_nt: 0.25,
                p_asd: 0.75,
                samples: 8,
            }],
            root: 0,
            training_samples: 8,
        };
        let model = ForestModel {
            version: MODEL_VERSION,
            params: ForestParams {
                n_estimators: 3,
                ..ForestParams::default()
            },
            schema: schema(37),
            trees: vec![tree; 3],
        };
        assert_eq!(model.score(&[0.0; 37]).unwrap(), 0.75);
    }

    #[test]
    fn tie_goes_to_asd() {
        assert_eq!(predict_label(0.5), Label::Asd);
        assert_eq!(predict_label(0.4999999), Label::Nt);
    }

    #[test]
    fn tree_count_and_range() {
        let data = random_set(300, 37, 1);
        let model = train_forest(&data, schema(37), &ForestParams::with_seed(5)).unwrap();
        assert_eq!(model.trees.len(), 56);
        for i in 0..data.len() {
            let p = model.score(data.row(i)).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        for t in &model.trees {
            assert!(t.audit_leaves(&model.params).is_empty());
        }
    }

    #[test]
    fn all_asd_predicts_one() {
        let data = random_set(100, 20, 2);
        let rows: Vec<Vec<f64>> = (0..data.len()).map(|i| data.row(i).to_vec()).collect();
        let all_asd = TrainingSet::new(&rows, &vec![Label::Asd; rows.len()]).unwrap();
        let model = train_forest(&all_asd, schema(20), &ForestParams::with_seed(1)).unwrap();
        for r in &rows {
            assert_eq!(model.score(r).unwrap(), 1.0);
        }
    }

    #[test]
    fn training_errors() {
        let empty = TrainingSet::new(&[], &[]).unwrap();
        assert!(matches!(
            train_forest(&empty, schema(37), &ForestParams::default()),
            Err(ForestError::EmptyTrainingSet)
        ));
        let narrow = random_set(50, 10, 3);
        assert!(matches!(
            train_forest(&narrow, schema(37), &ForestParams::default()),
            Err(ForestError::DimensionTooSmall { .. })
        ));
    }

    #[test]
    fn thread_count_does_not_change_the_model() {
        let data = random_set(250, 37, 4);
        let params = ForestParams::with_seed(77);
        let train_on = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_forest(&data, schema(37), &params).unwrap())
        };
        assert_eq!(train_on(1).to_json(), train_on(6).to_json());
        let other = train_forest(&data, schema(37), &ForestParams::with_seed(78)).unwrap();
        assert_ne!(other.to_json(), train_on(1).to_json());
    }

    #[test]
    fn json_round_trip_and_rejections() {
        let data = random_set(200, 37, 6);
        let model = train_forest(&data, schema(37), &ForestParams::with_seed(3)).unwrap();
        let text = model.to_json();
        let back = ForestModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json(), text);

        let v99 = text.replacen("\"version\": 1,", "\"version\": 99,", 1);
        let err = ForestModel::from_json(&v99).unwrap_err();
        assert_eq!(err.to_string(), "unsupported model version 99");

        assert!(matches!(
            ForestModel::from_json(&text[..text.len() / 2]),
            Err(ForestError::Malformed(_))
        ));

        let mut broken = model.clone();
        broken.trees[0].nodes[0] = Node::Split {
            feature: 37,
            threshold: 0.0,
            left: 1,
            right: 2,
        };
        assert!(ForestModel::from_json(&broken.to_json()).is_err());

        let mut short = model.clone();
        short.trees.pop();
        assert!(ForestModel::from_json(&short.to_json()).is_err());
    }

    #[test]
    fn score_rejects_bad_vectors() {
        let data = random_set(100, 37, 8);
        let model = train_forest(&data, schema(37), &ForestParams::with_seed(1)).unwrap();
        assert!(matches!(
            model.score(&[0.0; 36]),
            Err(ForestError::SchemaMismatch(_))
        ));
        let mut v = vec![0.0; 37];
        v[4] = f64::INFINITY;
        assert!(matches!(
            model.score(&v),
            Err(ForestError::NonFiniteFeature { index: 4, .. })
        ));
    }
}
