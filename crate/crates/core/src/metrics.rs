//! Binary classification metrics with ASD as the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("no samples to score")]
    Empty,
    #[error("AUROC undefined: only one class present")]
    SingleClass,
    #[error("no present values to aggregate for {0}")]
    NothingToAggregate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(labels: &[Label], predicted: &[Label]) -> Result<Self, MetricsError> {
        if labels.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch(labels.len(), predicted.len()));
        }
        if labels.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut m = Self::default();
        for (&y, &p) in labels.iter().zip(predicted) {
            match (y.is_positive(), p.is_positive()) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (false, false) => m.tn += 1,
                (true, false) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Precision, recall and F1 for one averaging mode. A `degenerate` entry
/// names each metric whose denominator was zero and which was set to 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if p + r == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Scores treating `positive` as the class of interest.
fn class_scores(m: &ConfusionMatrix, positive: Label, prefix: &str) -> PrfScores {
    let (tp, fp, fn_) = match positive {
        Label::Asd => (m.tp, m.fp, m.fn_),
        Label::Nt => (m.tn, m.fn_, m.fp),
    };
    let mut flags = Vec::new();
    let precision = ratio(tp, tp + fp, &format!("{prefix}precision"), &mut flags);
    let recall = ratio(tp, tp + fn_, &format!("{prefix}recall"), &mut flags);
    let f1 = harmonic(precision, recall, &format!("{prefix}f1"), &mut flags);
    PrfScores {
        precision,
        recall,
        f1,
        degenerate: flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// ASD-as-positive precision/recall/F1.
    pub positive: PrfScores,
    /// Per-class scores averaged with true-class support as weights.
    pub weighted: PrfScores,
}

pub fn confusion_and_scores(
    labels: &[Label],
    predicted: &[Label],
) -> Result<ClassificationScores, MetricsError> {
    let confusion = ConfusionMatrix::from_predictions(labels, predicted)?;
    let positive = class_scores(&confusion, Label::Asd, "");
    let negative = class_scores(&confusion, Label::Nt, "");
    let n = confusion.total() as f64;
    let w_pos = (confusion.tp + confusion.fn_) as f64 / n;
    let w_neg = (confusion.tn + confusion.fp) as f64 / n;
    let mut flags: Vec<String> = Vec::new();
    // a zero-support class carries no weight, so its flags do not matter
    if w_pos > 0.0 {
        flags.extend(positive.degenerate.iter().map(|f| format!("ASD {f}")));
    }
    if w_neg > 0.0 {
        flags.extend(negative.degenerate.iter().map(|f| format!("NT {f}")));
    }
    let weighted = PrfScores {
        precision: w_pos * positive.precision + w_neg * negative.precision,
        recall: w_pos * positive.recall + w_neg * negative.recall,
        f1: w_pos * positive.f1 + w_neg * negative.f1,
        degenerate: flags,
    };
    Ok(ClassificationScores {
        accuracy: confusion.accuracy(),
        confusion,
        positive,
        weighted,
    })
}

/// One operating point. `threshold` is `None` for the initial (0, 0) point,
/// which lies above every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows; the initial point's threshold prints as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let t = p
                .threshold
                .map_or_else(|| "inf".to_string(), |t| format!("{t:?}"));
            out.push_str(&format!("{t},{:?},{:?}\n", p.fpr, p.tpr));
        }
        out
    }
}

/// ROC sweep over distinct scores (descending) with trapezoidal area.
/// Tied scores move both rates in a single step.
pub fn roc_auc(labels: &[Label], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    if labels.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(labels.len(), scores.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: None,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc2 = 0.0; // twice the area in units of (1/pos)(1/neg)
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auc2 += ((fp - fp0) * (tp + tp0)) as f64;
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: Some(s),
        });
    }
    Ok(RocCurve {
        points,
        auc: auc2 / (2.0 * pos as f64 * neg as f64),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; absent with a single value.
    pub std: Option<f64>,
    /// Values that entered the aggregate.
    pub n: usize,
    /// Folds left out because the value was undefined there.
    pub excluded: usize,
}

/// Mean and sample standard deviation over the present values.
pub fn summarize(name: &str, values: &[Option<f64>]) -> Result<Summary, MetricsError> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(MetricsError::NothingToAggregate(name.to_string()));
    }
    let n = present.len();
    let mean = present.iter().sum::<f64>() / n as f64;
    let std = (n > 1)
        .then(|| (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Ok(Summary {
        mean,
        std,
        n,
        excluded: values.len() - n,
    })
}

/// Everything measured on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub scores: ClassificationScores,
    /// Absent when the fold's test side holds a single class.
    pub roc: Option<RocCurve>,
}

impl FoldMetrics {
    pub fn auroc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Weighted,
    Positive,
}

/// Cross-fold aggregate. The headline columns follow `averaging`; both
/// averaging modes are always present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub averaging: Averaging,
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub mean_auroc: Option<Summary>,
    pub weighted: PrfSummary,
    pub positive: PrfSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
}

fn prf_summary(
    folds: &[FoldMetrics],
    pick: fn(&ClassificationScores) -> &PrfScores,
) -> Result<PrfSummary, MetricsError> {
    let col = |f: fn(&PrfScores) -> f64| -> Vec<Option<f64>> {
        folds.iter().map(|m| Some(f(pick(&m.scores)))).collect()
    };
    Ok(PrfSummary {
        precision: summarize("precision", &col(|s| s.precision))?,
        recall: summarize("recall", &col(|s| s.recall))?,
        f1: summarize("f1", &col(|s| s.f1))?,
    })
}

pub fn aggregate_folds(
    folds: &[FoldMetrics],
    averaging: Averaging,
) -> Result<AggregateMetrics, MetricsError> {
    let accuracy: Vec<Option<f64>> = folds.iter().map(|f| Some(f.scores.accuracy)).collect();
    let auroc: Vec<Option<f64>> = folds.iter().map(FoldMetrics::auroc).collect();
    let weighted = prf_summary(folds, |s| &s.weighted)?;
    let positive = prf_summary(folds, |s| &s.positive)?;
    let headline = match averaging {
        Averaging::Weighted => weighted.clone(),
        Averaging::Positive => positive.clone(),
    };
    Ok(AggregateMetrics {
        averaging,
        accuracy: summarize("accuracy", &accuracy)?,
        precision: headline.precision,
        recall: headline.recall,
        f1: headline.f1,
        mean_auroc: summarize("auroc", &auroc).ok(),
        weighted,
        positive,
    })
}
