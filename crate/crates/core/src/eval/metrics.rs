use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(IdsError::DimensionMismatch {
                expected: self.n_classes,
                found: other.n_classes,
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(IdsError::DimensionMismatch {
            expected: y_true.len(),
            found: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(n_classes);
    for (&a, &p) in y_true.iter().zip(y_pred) {
        if a >= n_classes || p >= n_classes {
            return Err(IdsError::CodeOutOfRange {
                code: a.max(p),
                classes: n_classes,
            });
        }
        cm.counts[a][p] += 1;
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(IdsError::Empty("confusion matrix has no samples".into()));
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Weighted,
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One-vs-rest scores for one class. `zero_division` marks a precision or
/// recall whose denominator was zero and was reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub zero_division: bool,
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.n_classes)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let support = cm.support(c);
            let predicted = cm.predicted(c);
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            ClassMetrics {
                precision,
                recall,
                f1: f1_of(precision, recall),
                support,
                zero_division: predicted == 0 || support == 0,
            }
        })
        .collect()
}

/// Macro averages over classes that occur as actual or predicted labels;
/// weighted averages by support; micro pools all decisions.
pub fn precision_recall_f1(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Prf> {
    let total = cm.total();
    if total == 0 {
        return Err(IdsError::Empty("confusion matrix has no samples".into()));
    }
    let per = per_class_metrics(cm);
    Ok(match averaging {
        Averaging::Micro => {
            // every misclassification is one FP and one FN
            let a = cm.trace() as f64 / total as f64;
            Prf {
                precision: a,
                recall: a,
                f1: a,
            }
        }
        Averaging::Macro => {
            let used: Vec<&ClassMetrics> = per
                .iter()
                .enumerate()
                .filter(|(c, m)| m.support > 0 || cm.predicted(*c) > 0)
                .map(|(_, m)| m)
                .collect();
            let k = used.len() as f64;
            Prf {
                precision: used.iter().map(|m| m.precision).sum::<f64>() / k,
                recall: used.iter().map(|m| m.recall).sum::<f64>() / k,
                f1: used.iter().map(|m| m.f1).sum::<f64>() / k,
            }
        }
        Averaging::Weighted => {
            let t = total as f64;
            let w = |f: fn(&ClassMetrics) -> f64| {
                per.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / t
            };
            Prf {
                precision: w(|m| m.precision),
                recall: w(|m| m.recall),
                f1: w(|m| m.f1),
            }
        }
    })
}
