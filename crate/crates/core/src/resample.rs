//! Random oversampling to full class balance.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{self, Domain};

/// Record of which original rows were copied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub seed: u64,
    /// Target count per present class code; always the majority count.
    pub per_class_target: BTreeMap<usize, usize>,
    /// For appended row `k` (output row `n + k`), the original row it copies.
    pub source_indices: Vec<usize>,
}

impl ResamplePlan {
    pub fn appended(&self) -> usize {
        self.source_indices.len()
    }
}

/// Per-class row counts for codes `0..=max(y)`.
pub fn class_counts(y: &[usize]) -> Vec<usize> {
    let c = y.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; c];
    for &l in y {
        counts[l] += 1;
    }
    counts
}

/// Duplicate minority rows, uniformly with replacement, until every present
/// class reaches the majority count. Output rows `0..n` are the input rows.
///
/// Class `c` draws from its own stream keyed by `(seed, c)`.
pub fn random_oversample(
    x: &FeatureMatrix,
    y: &[usize],
    seed: u64,
) -> Result<(FeatureMatrix, Vec<usize>, ResamplePlan)> {
    if y.is_empty() {
        return Err(IdsError::Empty("cannot oversample zero rows".into()));
    }
    if y.len() != x.rows() {
        return Err(IdsError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let counts = class_counts(y);
    let majority = *counts.iter().max().expect("non-empty");
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in y.iter().enumerate() {
        members[l].push(i);
    }

    let mut per_class_target = BTreeMap::new();
    let mut source_indices = Vec::new();
    for (c, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        per_class_target.insert(c, majority);
        let mut rng = rng::stream(seed, Domain::Oversample, &[c as u64]);
        for _ in rows.len()..majority {
            source_indices.push(rows[rng.random_range(0..rows.len())]);
        }
    }

    let mut x_out = x.clone();
    let mut y_out = y.to_vec();
    for &s in &source_indices {
        x_out.push_row(x.row(s))?;
        y_out.push(y[s]);
    }
    Ok((
        x_out,
        y_out,
        ResamplePlan {
            seed,
            per_class_target,
            source_indices,
        },
    ))
}
