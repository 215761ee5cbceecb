//! Classification metrics and the cross-entropy training loss.
//!
//! The binary task reports positive-class precision/recall/F1 (class 1 =
//! referable); the multiclass task reports macro averages. Zero-denominator
//! cases (a class never predicted, or absent from the truth) score 0 for the
//! affected metric and are flagged rather than silently skipped.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Row = true class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfusion(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts: vec![vec![0; num_classes]; num_classes],
        })
    }

    pub fn record(&mut self, truth: usize, prediction: usize) -> Result<()> {
        for class in [truth, prediction] {
            if class >= self.num_classes {
                return Err(Error::ClassOutOfRange {
                    class,
                    num_classes: self.num_classes,
                });
            }
        }
        self.counts[truth][prediction] += 1;
        Ok(())
    }

    pub fn from_pairs(num_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::new(num_classes)?;
        for &(truth, prediction) in pairs {
            m.record(truth, prediction)?;
        }
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, truth: usize, prediction: usize) -> usize {
        self.counts[truth][prediction]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    fn true_positives(&self, class: usize) -> usize {
        self.counts[class][class]
    }

    fn predicted(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    fn actual(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }
}

/// How per-class scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Report class 1 only (two-class tasks).
    BinaryPositive,
    /// Unweighted mean over classes.
    Macro,
}

/// Scores for a single class, with its zero-denominator flags.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// True when the class was never predicted (precision undefined, 0 used).
    pub no_predictions: bool,
    /// True when the class never occurs in the truth (recall undefined,
    /// 0 used).
    pub no_occurrences: bool,
}

/// Aggregate report: accuracy plus averaged precision/recall/F1 and the
/// per-class breakdown they came from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub averaging: Averaging,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total: usize,
    pub per_class: Vec<ClassMetrics>,
}

fn class_metrics(m: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let tp = m.true_positives(class) as f64;
    let predicted = m.predicted(class);
    let actual = m.actual(class);
    let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
    let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        class,
        precision,
        recall,
        f1,
        support: actual,
        no_predictions: predicted == 0,
        no_occurrences: actual == 0,
    }
}

/// Compute the report for a populated confusion matrix.
pub fn compute_metrics(m: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidConfusion(
            "empty confusion matrix".to_string(),
        ));
    }
    if averaging == Averaging::BinaryPositive && m.num_classes() != 2 {
        return Err(Error::InvalidConfusion(format!(
            "binary averaging needs 2 classes, matrix has {}",
            m.num_classes()
        )));
    }
    let correct: usize = (0..m.num_classes()).map(|c| m.true_positives(c)).sum();
    let accuracy = correct as f64 / total as f64;
    let per_class: Vec<ClassMetrics> =
        (0..m.num_classes()).map(|c| class_metrics(m, c)).collect();
    let (precision, recall, f1) = match averaging {
        Averaging::BinaryPositive => {
            let positive = &per_class[1];
            (positive.precision, positive.recall, positive.f1)
        }
        Averaging::Macro => {
            let n = per_class.len() as f64;
            (
                per_class.iter().map(|c| c.precision).sum::<f64>() / n,
                per_class.iter().map(|c| c.recall).sum::<f64>() / n,
                per_class.iter().map(|c| c.f1).sum::<f64>() / n,
            )
        }
    };
    Ok(MetricsReport {
        averaging,
        accuracy,
        precision,
        recall,
        f1,
        total,
        per_class,
    })
}

/// Mean softmax cross-entropy over a batch of logits, with `dL/dlogits`.
/// Stabilized with per-row max subtraction.
pub fn softmax_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>)> {
    let (n, classes) = logits.dim();
    if labels.len() != n {
        return Err(Error::DimMismatch {
            context: "cross-entropy labels".to_string(),
            expected: format!("{n} labels"),
            found: labels.len().to_string(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidConfusion("empty logit batch".to_string()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "classifier logits".to_string(),
        });
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, classes));
    for i in 0..n {
        let label = labels[i];
        if label >= classes {
            return Err(Error::ClassOutOfRange {
                class: label,
                num_classes: classes,
            });
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + denom.ln();
        loss += lse - row[label];
        for c in 0..classes {
            let p = (row[c] - max).exp() / denom;
            grad[[i, c]] = (p - if c == label { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((loss / n as f64, grad))
}

/// Row-wise argmax of a logit batch.
pub fn predictions_from_logits(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("non-empty logit row")
        })
        .collect()
}
