use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::RealMatrix;

/// One ROC vertex: false positive rate, true positive rate.
pub type RocPoint = (f64, f64);

// (tp, fp) added by each group of equal scores, highest score first
fn score_groups(y: &[bool], scores: &[f64]) -> Result<(Vec<(u64, u64)>, u64, u64)> {
    if y.len() != scores.len() {
        return Err(IdsError::DimensionMismatch {
            expected: y.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(IdsError::InvalidArgument("ROC scores must be finite".into()));
    }
    let pos = y.iter().filter(|&&b| b).count() as u64;
    let neg = y.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(IdsError::InvalidArgument(
            "ROC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut tp, mut fp) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        groups.push((tp, fp));
    }
    Ok((groups, pos, neg))
}

/// Vertices at every distinct threshold, from (0,0) to (1,1). Tied scores
/// move the curve in one diagonal step.
pub fn roc_curve(y: &[bool], scores: &[f64]) -> Result<Vec<RocPoint>> {
    let (groups, pos, neg) = score_groups(y, scores)?;
    let mut pts = Vec::with_capacity(groups.len() + 1);
    pts.push((0.0, 0.0));
    let (mut tp, mut fp) = (0u64, 0u64);
    for (gt, gf) in groups {
        tp += gt;
        fp += gf;
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Trapezoid area under the ROC curve. Each trapezoid is accumulated in
/// integer counts and divided once, so the result is the exact rational
/// rounded to the nearest double.
pub fn auc(y: &[bool], scores: &[f64]) -> Result<f64> {
    let (groups, pos, neg) = score_groups(y, scores)?;
    // twice the area in units of 1/(pos*neg)
    let mut twice: u128 = 0;
    let mut tp: u128 = 0;
    for (gt, gf) in groups {
        let (gt, gf) = (gt as u128, gf as u128);
        twice += gf * (2 * tp + gt);
        tp += gt;
    }
    Ok(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    /// `None` where the class is absent from `y` (or is every row).
    pub per_class: Vec<Option<f64>>,
    pub macro_avg: f64,
}

/// One-vs-rest AUC per class using that class's probability column.
pub fn multiclass_auc(y: &[usize], proba: &RealMatrix) -> Result<MulticlassAuc> {
    if proba.rows() != y.len() {
        return Err(IdsError::DimensionMismatch {
            expected: y.len(),
            found: proba.rows(),
        });
    }
    let c = proba.cols();
    let mut present = vec![0usize; c];
    for &l in y {
        if l >= c {
            return Err(IdsError::CodeOutOfRange { code: l, classes: c });
        }
        present[l] += 1;
    }
    if present.iter().filter(|&&k| k > 0).count() < 2 {
        return Err(IdsError::InvalidArgument(
            "one-vs-rest AUC needs at least two classes present".into(),
        ));
    }
    let mut per_class = Vec::with_capacity(c);
    for (k, &count) in present.iter().enumerate() {
        if count == 0 {
            per_class.push(None);
            continue;
        }
        let labels: Vec<bool> = y.iter().map(|&l| l == k).collect();
        per_class.push(Some(auc(&labels, &proba.column(k))?));
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_avg = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(MulticlassAuc {
        per_class,
        macro_avg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separating_and_inverted() {
        let y = [false, false, true, true];
        assert_eq!(auc(&y, &[0.1, 0.2, 0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auc(&y, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn all_tied_is_half() {
        let y = [false, true, true, false, true];
        assert_eq!(auc(&y, &[0.3; 5]).unwrap(), 0.5);
        assert_eq!(roc_curve(&y, &[0.3; 5]).unwrap(), vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn curve_is_monotone_and_anchored() {
        let y = [true, false, true, false, false, true];
        let s = [0.9, 0.9, 0.5, 0.4, 0.4, 0.1];
        let pts = roc_curve(&y, &s).unwrap();
        assert_eq!(pts[0], (0.0, 0.0));
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        // tied pair at 0.9 is a single diagonal step
        assert_eq!(pts[1], (1.0 / 3.0, 1.0 / 3.0));
    }

    #[test]
    fn one_class_rejected() {
        assert!(auc(&[true, true], &[0.1, 0.2]).is_err());
        assert!(auc(&[true, false], &[f64::NAN, 0.2]).is_err());
    }

    #[test]
    fn multiclass_one_hot_and_uniform() {
        let y = [0, 1, 2, 1];
        let one_hot = RealMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let m = multiclass_auc(&y, &one_hot).unwrap();
        assert_eq!(m.macro_avg, 1.0);
        let uniform = RealMatrix::from_vec(4, 3, vec![1.0 / 3.0; 12]).unwrap();
        let u = multiclass_auc(&y, &uniform).unwrap();
        assert!(u.per_class.iter().all(|a| *a == Some(0.5)));
    }

    #[test]
    fn absent_class_is_undefined() {
        let y = [0, 1, 0];
        let p = RealMatrix::from_vec(3, 3, vec![0.5, 0.3, 0.2, 0.1, 0.8, 0.1, 0.6, 0.2, 0.2]).unwrap();
        let m = multiclass_auc(&y, &p).unwrap();
        assert_eq!(m.per_class[2], None);
        assert_eq!(m.macro_avg, 1.0);
    }
}
