//! Node impurity measures.

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};

/// Split quality criterion for classification trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    /// Impurity of a count vector whose total is `n > 0`; no validation.
    #[inline]
    pub(crate) fn of_counts(self, counts: &[f64], n: f64) -> f64 {
        match self {
            Criterion::Gini => {
                1.0 - counts.iter().map(|&c| (c / n) * (c / n)).sum::<f64>()
            }
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|&c| {
                    let p = c / n;
                    p * p.log2()
                })
                .sum::<f64>(),
        }
    }
}

fn total(counts: &[f64]) -> Result<f64> {
    if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(IdsError::InvalidArgument("class counts must be finite and non-negative".into()));
    }
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return Err(IdsError::InvalidArgument("class counts sum to zero".into()));
    }
    Ok(n)
}

/// `1 − Σ pᵢ²`.
pub fn gini(counts: &[f64]) -> Result<f64> {
    let n = total(counts)?;
    Ok(Criterion::Gini.of_counts(counts, n))
}

/// `−Σ pᵢ log₂ pᵢ` with `0 · log 0 = 0`.
pub fn entropy(counts: &[f64]) -> Result<f64> {
    let n = total(counts)?;
    Ok(Criterion::Entropy.of_counts(counts, n))
}

/// Parent entropy minus the size-weighted entropy of the children.
/// Empty children carry zero weight.
pub fn info_gain(parent: &[f64], children: &[Vec<f64>]) -> Result<f64> {
    let n = total(parent)?;
    let h = Criterion::Entropy.of_counts(parent, n);
    let mut weighted = 0.0;
    for child in children {
        let m: f64 = child.iter().sum();
        if m > 0.0 {
            weighted += m / n * entropy(child)?;
        }
    }
    Ok(h - weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(gini(&[10.0, 0.0]).unwrap(), 0.0);
        assert!((gini(&[5.0, 5.0]).unwrap() - 0.5).abs() < 1e-15);
        // 1 − (1 + 4 + 9)/36
        assert!((gini(&[1.0, 2.0, 3.0]).unwrap() - 11.0 / 18.0).abs() < 1e-15);
        assert!((entropy(&[5.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(entropy(&[10.0, 0.0]).unwrap(), 0.0);
        let g = info_gain(&[4.0, 4.0], &[vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_counts_error() {
        assert!(gini(&[0.0, 0.0]).is_err());
        assert!(entropy(&[]).is_err());
        assert!(info_gain(&[0.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn bounds_and_non_negative_gain(
            parts in prop::collection::vec(prop::collection::vec(0u32..20, 3), 1..5)
        ) {
            let c = 3.0f64;
            let parent: Vec<f64> = (0..3).map(|k| parts.iter().map(|p| f64::from(p[k])).sum()).collect();
            prop_assume!(parent.iter().sum::<f64>() > 0.0);
            let g = gini(&parent).unwrap();
            let h = entropy(&parent).unwrap();
            prop_assert!((-1e-12..=1.0 - 1.0 / c + 1e-12).contains(&g));
            prop_assert!((-1e-12..=c.log2() + 1e-12).contains(&h));
            let children: Vec<Vec<f64>> = parts.iter().map(|p| p.iter().map(|&v| f64::from(v)).collect()).collect();
            prop_assert!(info_gain(&parent, &children).unwrap() >= -1e-12);
        }
    }
}
