//! Random forests and extremely randomized trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_xy, grow, MaxFeatures, Splitter, Tree, TreeParams};
use crate::error::{IdsError, Result};
use crate::matrix::{argmax, check_width, FeatureMatrix, RealMatrix};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    RandomForest,
    ExtraTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub kind: ForestKind,
    pub params: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
    pub n_features: usize,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

/// Per-tree training rows: a bootstrap of size `n` from the tree's own
/// stream, or all rows.
pub fn tree_sample(n: usize, tree: usize, seed: u64, bootstrap: bool) -> Vec<u32> {
    if bootstrap {
        let mut rng = rng::stream(seed, Domain::Bootstrap, &[tree as u64]);
        (0..n).map(|_| rng.random_range(0..n as u32)).collect()
    } else {
        (0..n as u32).collect()
    }
}

/// Shared fitting routine. `bootstrap` is exposed so the degenerate
/// single-tree configuration can be compared with a bare tree.
pub fn forest_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    kind: ForestKind,
    n_trees: usize,
    params: &TreeParams,
    bootstrap: bool,
    seed: u64,
) -> Result<ForestModel> {
    check_xy(x, y, n_classes)?;
    params.validate()?;
    if n_trees == 0 {
        return Err(IdsError::InvalidArgument("n_trees must be at least 1".into()));
    }
    let params = TreeParams {
        seed,
        ..params.clone()
    };
    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let rows = tree_sample(x.rows(), t, seed, bootstrap);
            grow(x, y, n_classes, &params, t as u64, rows)
        })
        .collect();
    Ok(ForestModel {
        kind,
        params,
        bootstrap,
        seed,
        n_features: x.cols(),
        n_classes,
        trees,
    })
}

/// Bootstrap sampling with exhaustive split search.
pub fn rf_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    n_trees: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<ForestModel> {
    let params = TreeParams {
        splitter: Splitter::Best,
        ..params.clone()
    };
    forest_fit(x, y, n_classes, ForestKind::RandomForest, n_trees, &params, true, seed)
}

/// Every tree sees the full sample; cut-points are drawn at random.
pub fn et_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    n_trees: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<ForestModel> {
    let params = TreeParams {
        splitter: Splitter::Random,
        ..params.clone()
    };
    forest_fit(x, y, n_classes, ForestKind::ExtraTrees, n_trees, &params, false, seed)
}

/// Ensemble defaults: square-root feature sampling, unlimited depth.
pub fn default_forest_params() -> TreeParams {
    TreeParams {
        max_features: MaxFeatures::Sqrt,
        ..TreeParams::default()
    }
}

/// Mean of the per-tree leaf frequency vectors.
pub fn forest_predict_proba(m: &ForestModel, x: &FeatureMatrix) -> Result<RealMatrix> {
    check_width(m.n_features, x.cols())?;
    let c = m.n_classes;
    let inv = 1.0 / m.trees.len() as f64;
    let rows: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut acc = vec![0.0; c];
            let mut buf = vec![0.0; c];
            // trees are summed in index order for thread-count independence
            for t in &m.trees {
                t.proba_row(x.row(i), &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
            }
            acc.into_iter().map(move |a| a * inv)
        })
        .collect();
    RealMatrix::from_vec(x.rows(), c, rows)
}

/// Argmax of the averaged probabilities, lowest code on ties.
pub fn forest_predict(m: &ForestModel, x: &FeatureMatrix) -> Result<Vec<usize>> {
    let p = forest_predict_proba(m, x)?;
    Ok(p.iter_rows().map(argmax).collect())
}

/// Plain majority vote over hard tree predictions, lowest code on ties.
pub fn majority_vote(votes: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0u32; n_classes];
    for &v in votes {
        counts[v] += 1;
    }
    super::tree::argmax_u32(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::{dt_fit, tree_predict, tree_predict_proba, Node};
    use rand_distr::StandardNormal;

    fn blobs(n: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = rng::stream(seed, Domain::Synth, &[]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            rows.push(
                (0..3)
                    .map(|_| (centre + rng.sample::<f64, _>(StandardNormal) * 0.5) as f32)
                    .collect(),
            );
            y.push(c);
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    fn accuracy(p: &[usize], y: &[usize]) -> f64 {
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn one_tree_without_bootstrap_equals_a_bare_tree() {
        let (x, y) = blobs(120, 1);
        let params = TreeParams {
            max_features: MaxFeatures::All,
            seed: 9,
            ..TreeParams::default()
        };
        let f = forest_fit(&x, &y, 2, ForestKind::RandomForest, 1, &params, false, 9).unwrap();
        let t = dt_fit(&x, &y, 2, &params).unwrap();
        assert_eq!(f.trees[0], t);
        assert_eq!(forest_predict(&f, &x).unwrap(), tree_predict(&t, &x).unwrap());
        assert_eq!(forest_predict_proba(&f, &x).unwrap(), tree_predict_proba(&t, &x).unwrap());
    }

    #[test]
    fn majority_vote_example() {
        assert_eq!(majority_vote(&[0, 0, 1], 2), 0);
        assert_eq!(majority_vote(&[1, 0], 2), 0);
    }

    #[test]
    fn averaged_probabilities() {
        let leaf = |a: u32, b: u32| Tree {
            n_features: 1,
            n_classes: 2,
            nodes: vec![Node::Leaf {
                class_counts: vec![a, b],
                prediction: u32::from(b > a),
            }],
        };
        let m = ForestModel {
            kind: ForestKind::RandomForest,
            params: TreeParams::default(),
            bootstrap: true,
            seed: 0,
            n_features: 1,
            n_classes: 2,
            trees: vec![leaf(6, 4), leaf(2, 8)],
        };
        let x = FeatureMatrix::zeros(1, 1);
        let p = forest_predict_proba(&m, &x).unwrap();
        assert!((p.get(0, 0) - 0.4).abs() < 1e-12 && (p.get(0, 1) - 0.6).abs() < 1e-12);
        assert_eq!(forest_predict(&m, &x).unwrap(), vec![1]);

        let same = ForestModel {
            trees: vec![leaf(6, 4), leaf(6, 4)],
            ..m
        };
        let p = forest_predict_proba(&same, &x).unwrap();
        assert_eq!(p.row(0), &[0.6, 0.4]);
    }

    #[test]
    fn random_forest_on_blobs() {
        let (x, y) = blobs(400, 2);
        let (xt, yt) = blobs(400, 3);
        let m = rf_fit(&x, &y, 2, 25, &default_forest_params(), 4).unwrap();
        assert!(m.bootstrap && m.params.splitter == Splitter::Best);
        assert!(accuracy(&forest_predict(&m, &xt).unwrap(), &yt) >= 0.99);
        let p = forest_predict_proba(&m, &xt).unwrap();
        for r in p.iter_rows() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn extra_trees_on_blobs_use_all_rows() {
        let (x, y) = blobs(400, 5);
        let (xt, yt) = blobs(400, 6);
        let m = et_fit(&x, &y, 2, 25, &default_forest_params(), 7).unwrap();
        assert!(!m.bootstrap && m.params.splitter == Splitter::Random);
        for t in 0..m.n_trees() {
            assert_eq!(tree_sample(x.rows(), t, m.seed, m.bootstrap), (0..400).collect::<Vec<u32>>());
        }
        // every root holds all 400 rows
        for t in &m.trees {
            let total: u32 = t
                .nodes
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { class_counts, .. } => Some(class_counts.iter().sum::<u32>()),
                    _ => None,
                })
                .sum();
            assert_eq!(total, 400);
        }
        assert!(accuracy(&forest_predict(&m, &xt).unwrap(), &yt) >= 0.99);
    }

    #[test]
    fn pure_data_single_leaf() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let m = et_fit(&x, &[1, 1], 2, 1, &default_forest_params(), 0).unwrap();
        assert_eq!(m.trees[0].nodes.len(), 1);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let (x, y) = blobs(300, 8);
        let fit = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| rf_fit(&x, &y, 2, 16, &default_forest_params(), 3).unwrap())
        };
        let a = serde_json::to_string(&fit(1)).unwrap();
        let b = serde_json::to_string(&fit(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trees_rejected() {
        let (x, y) = blobs(10, 0);
        assert!(rf_fit(&x, &y, 2, 0, &default_forest_params(), 0).is_err());
    }
}
