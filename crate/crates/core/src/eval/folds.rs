use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::resample::class_counts;
use crate::rng::{self, Domain};

/// Assignment of every row to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub stratified: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignments {
            s[f] += 1;
        }
        s
    }
}

/// Seeded k-fold assignment. When stratified, each class is shuffled on its
/// own stream and dealt round-robin, the deal continuing from where the
/// previous class stopped so overall fold sizes also stay within one.
pub fn make_folds(y: &[usize], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan> {
    let n = y.len();
    if k < 2 {
        return Err(IdsError::InvalidArgument("k must be at least 2".into()));
    }
    if k > n {
        return Err(IdsError::InvalidArgument(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut assignments = vec![0usize; n];
    if stratified {
        let counts = class_counts(y);
        let mut members: Vec<Vec<usize>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        for (i, &c) in y.iter().enumerate() {
            members[c].push(i);
        }
        let mut offset = 0usize;
        for (c, rows) in members.iter_mut().enumerate() {
            let mut rng = rng::stream(seed, Domain::Folds, &[c as u64]);
            rows.shuffle(&mut rng);
            for (j, &i) in rows.iter().enumerate() {
                assignments[i] = (offset + j) % k;
            }
            offset = (offset + rows.len()) % k;
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng::stream(seed, Domain::Folds, &[u64::MAX]);
        order.shuffle(&mut rng);
        for (j, &i) in order.iter().enumerate() {
            assignments[i] = j % k;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        stratified,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_partition(p: &FoldPlan, n: usize) {
        let mut seen = vec![false; n];
        for f in 0..p.k {
            for i in p.test_indices(f) {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let s = p.fold_sizes();
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    }

    #[test]
    fn hundred_by_ten() {
        let y = vec![0; 100];
        for strat in [false, true] {
            let p = make_folds(&y, 10, strat, 1).unwrap();
            check_partition(&p, 100);
            assert!(p.fold_sizes().iter().all(|&s| s == 10));
        }
    }

    #[test]
    fn twelve_by_five() {
        let p = make_folds(&[0; 12], 5, false, 3).unwrap();
        let mut s = p.fold_sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 3, 3]);
    }

    #[test]
    fn stratified_sixty_forty() {
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 60)).collect();
        let p = make_folds(&y, 10, true, 5).unwrap();
        for f in 0..10 {
            let t = p.test_indices(f);
            assert_eq!(t.iter().filter(|&&i| y[i] == 0).count(), 6);
            assert_eq!(t.iter().filter(|&&i| y[i] == 1).count(), 4);
        }
    }

    #[test]
    fn train_is_complement() {
        let p = make_folds(&[0, 1, 0, 1, 0, 1, 1], 3, true, 0).unwrap();
        for f in 0..3 {
            let mut all = p.train_indices(f);
            all.extend(p.test_indices(f));
            all.sort_unstable();
            assert_eq!(all, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_k() {
        assert!(make_folds(&[0, 1], 3, false, 0).is_err());
        assert!(make_folds(&[0, 1], 1, false, 0).is_err());
    }
}
