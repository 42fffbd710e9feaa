use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestError, ForestParams, TrainingSet};
use crate::Label;

/// `1 - sum (n_c / n)^2` over class counts.
pub fn gini_impurity(counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyNode);
    }
    let n = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>())
}

/// Binary gini on (asd, total) without the error path.
fn gini2(asd: usize, total: usize) -> f64 {
    let p = asd as f64 / total as f64;
    let q = (total - asd) as f64 / total as f64;
    1.0 - p * p - q * q
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Rows with `value <= threshold` go left.
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Exhaustive midpoint scan over the candidate features.
///
/// Only splits leaving at least `params.min_leaf_rows(tree_total)` rows on
/// each side are legal. Ties go to the lower feature index, then the lower
/// threshold. Pure nodes and nodes without a legal split yield `None`.
pub fn best_split(
    data: &TrainingSet,
    rows: &[usize],
    candidates: &[usize],
    params: &ForestParams,
    tree_total: usize,
) -> Option<Split> {
    let n = rows.len();
    let asd_total = rows
        .iter()
        .filter(|&&r| data.label(r) == Label::Asd)
        .count();
    if asd_total == 0 || asd_total == n {
        return None;
    }
    let min_rows = params.min_leaf_rows(tree_total);
    if n < 2 * min_rows {
        return None;
    }
    let parent = gini2(asd_total, n);

    let mut features = candidates.to_vec();
    features.sort_unstable();
    let mut best: Option<Split> = None;
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(n);
    for &f in &features {
        column.clear();
        column.extend(
            rows.iter()
                .map(|&r| (data.value(r, f), data.label(r) == Label::Asd)),
        );
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_asd = 0;
        for i in 0..n - 1 {
            if column[i].1 {
                left_asd += 1;
            }
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_left < min_rows {
                continue;
            }
            if n_right < min_rows {
                break;
            }
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo >= hi {
                continue;
            }
            let child = (n_left as f64 * gini2(left_asd, n_left)
                + n_right as f64 * gini2(asd_total - left_asd, n_right))
                / n as f64;
            let decrease = parent - child;
            if best.is_none_or(|b| decrease > b.impurity_decrease) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi || !threshold.is_finite() {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    impurity_decrease: decrease,
                });
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        p_nt: f64,
        p_asd: f64,
        samples: usize,
    },
}

/// A tree in flat array form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub root: usize,
    /// Rows in the sample the tree was grown on.
    pub training_samples: usize,
}

/// A leaf breaking the size constraints it was grown under.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafViolation {
    pub node: usize,
    pub samples: usize,
    pub required: usize,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> (f64, f64) {
        let mut i = self.root;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { p_nt, p_asd, .. } => return (*p_nt, *p_asd),
            }
        }
    }

    /// ASD fraction of the leaf `x` falls into.
    pub fn predict_asd(&self, x: &[f64]) -> f64 {
        self.leaf(x).1
    }

    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((i, d)) = stack.pop() {
            max = max.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        max
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf { .. }))
    }

    /// Leaves holding fewer rows than `params` allow for this tree.
    pub fn audit_leaves(&self, params: &ForestParams) -> Vec<LeafViolation> {
        let required = params.min_leaf_rows(self.training_samples);
        self.leaves()
            .filter_map(|(i, n)| match n {
                Node::Leaf { samples, .. } if *samples < required => Some(LeafViolation {
                    node: i,
                    samples: *samples,
                    required,
                }),
                _ => None,
            })
            .collect()
    }

    /// Checks that the node array forms one tree rooted at `root` whose
    /// splits reference features below `dimension`.
    pub fn validate(&self, dimension: usize) -> Result<(), ForestError> {
        let bad = |m: String| Err(ForestError::Malformed(m));
        if self.root >= self.nodes.len() {
            return bad(format!("root {} out of range", self.root));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("node {i} reached twice"));
            }
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= dimension {
                        return bad(format!(
                            "node {i} references feature index {feature} in a {dimension}-dimensional schema"
                        ));
                    }
                    if !threshold.is_finite() {
                        return bad(format!("node {i} has a non-finite threshold"));
                    }
                    for &c in [left, right] {
                        if c >= self.nodes.len() {
                            return bad(format!("node {i} child {c} out of range"));
                        }
                        stack.push(c);
                    }
                }
                Node::Leaf { p_nt, p_asd, .. } => {
                    if !(0.0..=1.0).contains(p_nt)
                        || !(0.0..=1.0).contains(p_asd)
                        || (p_nt + p_asd - 1.0).abs() > 1e-12
                    {
                        return bad(format!("node {i} has invalid class fractions"));
                    }
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return bad(format!("node {i} is unreachable"));
        }
        Ok(())
    }
}

fn make_leaf(data: &TrainingSet, rows: &[usize]) -> Node {
    let n = rows.len();
    let asd = rows
        .iter()
        .filter(|&&r| data.label(r) == Label::Asd)
        .count();
    let p_asd = asd as f64 / n as f64;
    Node::Leaf {
        p_nt: 1.0 - p_asd,
        p_asd,
        samples: n,
    }
}

/// Grows one tree on `sample` (row indices into `data`, duplicates allowed).
pub fn grow_tree<R: Rng + ?Sized>(
    data: &TrainingSet,
    sample: Vec<usize>,
    params: &ForestParams,
    rng: &mut R,
) -> DecisionTree {
    assert!(!sample.is_empty(), "cannot grow a tree on an empty sample");
    let total = sample.len();
    let dimension = data.n_features();
    let n_candidates = params.max_features.min(dimension);
    let mut nodes: Vec<Option<Node>> = vec![None];
    let mut stack = vec![(0usize, sample, 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let splittable = depth < params.max_depth && rows.len() >= params.min_samples_split;
        let split = if splittable {
            let mut candidates = index::sample(rng, dimension, n_candidates).into_vec();
            candidates.sort_unstable();
            best_split(data, &rows, &candidates, params, total)
        } else {
            None
        };
        match split {
            None => nodes[slot] = Some(make_leaf(data, &rows)),
            Some(s) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| data.value(r, s.feature) <= s.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(None);
                nodes.push(None);
                nodes[slot] = Some(Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                });
                stack.push((right, right_rows, depth + 1));
                stack.push((left, left_rows, depth + 1));
            }
        }
    }
    DecisionTree {
        nodes: nodes
            .into_iter()
            .map(|n| n.expect("every slot filled"))
            .collect(),
        root: 0,
        training_samples: total,
    }
}
