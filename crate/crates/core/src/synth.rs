//! Gaussian-blob datasets with configurable class imbalance, written in the
//! same CSV layout as the benchmark files.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::ingest::{CleanTable, Provenance};
use crate::matrix::FeatureMatrix;
use crate::rng::{self, Domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Relative class sizes; class `c` is named `c{c}`.
    pub ratios: Vec<f64>,
    pub rows: usize,
    pub dims: usize,
    /// Typical distance between two class centres.
    pub separation: f64,
    /// Per-dimension standard deviation around a centre.
    pub spread: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(ratios: Vec<f64>, rows: usize, dims: usize, seed: u64) -> Self {
        SynthSpec {
            ratios,
            rows,
            dims,
            separation: 6.0,
            spread: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.len() < 2 {
            return Err(IdsError::InvalidArgument("synthetic data needs at least two classes".into()));
        }
        if self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(IdsError::InvalidArgument("class ratios must be positive".into()));
        }
        if self.rows < self.ratios.len() {
            return Err(IdsError::InvalidArgument("need at least one row per class".into()));
        }
        if self.dims == 0 {
            return Err(IdsError::InvalidArgument("dims must be at least 1".into()));
        }
        if !(self.spread > 0.0) || !(self.separation >= 0.0) {
            return Err(IdsError::InvalidArgument("spread must be positive and separation non-negative".into()));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `rows` by `ratios`, at least one per
/// class; leftover rows go to the largest remainders, lowest class first.
pub fn class_sizes(ratios: &[f64], rows: usize) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| rows as f64 * r / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e.floor() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut assigned: usize = counts.iter().sum();
    let mut i = 0;
    while assigned < rows {
        counts[order[i % order.len()]] += 1;
        assigned += 1;
        i += 1;
    }
    while assigned > rows {
        // only reachable through the one-per-class floor; trim the largest class
        let big = (0..counts.len()).max_by_key(|&c| (counts[c], usize::MAX - c)).unwrap();
        counts[big] -= 1;
        assigned -= 1;
    }
    counts
}

/// Draw the dataset. Rows are shuffled; values are stored as `f32`.
pub fn generate(spec: &SynthSpec) -> Result<CleanTable> {
    spec.validate()?;
    let counts = class_sizes(&spec.ratios, spec.rows);
    // centres: iid normal coordinates scaled so E‖a − b‖ ≈ separation
    let centre_sd = spec.separation / (2.0 * spec.dims as f64).sqrt();
    let centre_dist = Normal::new(0.0, centre_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let noise = Normal::new(0.0, spec.spread).expect("positive sd");
    let mut rows: Vec<(Vec<f32>, usize)> = Vec::with_capacity(spec.rows);
    for (c, &count) in counts.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, Domain::Synth, &[c as u64]);
        let centre: Vec<f64> = (0..spec.dims)
            .map(|_| if spec.separation > 0.0 { centre_dist.sample(&mut rng) } else { 0.0 })
            .collect();
        for _ in 0..count {
            let row = centre
                .iter()
                .map(|m| (m + noise.sample(&mut rng)) as f32)
                .collect();
            rows.push((row, c));
        }
    }
    let mut rng = rng::stream(spec.seed, Domain::Synth, &[u64::MAX]);
    rows.shuffle(&mut rng);
    let mut data = Vec::with_capacity(spec.rows * spec.dims);
    let mut labels = Vec::with_capacity(spec.rows);
    for (r, c) in rows {
        data.extend(r);
        labels.push(format!("c{c}"));
    }
    debug_assert_eq!(labels.len(), spec.rows);
    Ok(CleanTable {
        feature_names: (0..spec.dims).map(|j| format!("f{j}")).collect(),
        label_name: "label".into(),
        features: FeatureMatrix::from_vec(spec.rows, spec.dims, data)?,
        labels,
        provenance: Provenance {
            rows_in: spec.rows,
            ..Provenance::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(class_sizes(&[100.0, 10.0, 1.0], 5000), vec![4505, 450, 45]);
        assert_eq!(class_sizes(&[1.0, 1.0], 7), vec![4, 3]);
        assert_eq!(class_sizes(&[1000.0, 1.0], 10), vec![9, 1]);
    }

    #[test]
    fn counts_and_shape() {
        let t = generate(&SynthSpec::new(vec![100.0, 10.0, 1.0], 5000, 20, 1)).unwrap();
        assert_eq!(t.features.rows(), 5000);
        assert_eq!(t.features.cols(), 20);
        let h = crate::ingest::class_histogram(&t.labels);
        assert_eq!(
            h,
            vec![("c0".to_string(), 4505), ("c1".to_string(), 450), ("c2".to_string(), 45)]
        );
    }

    #[test]
    fn deterministic() {
        let s = SynthSpec::new(vec![3.0, 1.0], 200, 4, 9);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = SynthSpec { seed: 10, ..s.clone() };
        assert_ne!(generate(&s).unwrap().features, generate(&other).unwrap().features);
    }

    #[test]
    fn one_class_rejected() {
        assert!(generate(&SynthSpec::new(vec![1.0], 10, 2, 0)).is_err());
        assert!(generate(&SynthSpec::new(vec![1.0, 0.0], 10, 2, 0)).is_err());
    }
}
