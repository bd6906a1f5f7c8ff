//! CART-style classification trees.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::impurity::Criterion;
use crate::error::{IdsError, Result};
use crate::matrix::{check_width, FeatureMatrix, RealMatrix};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt() as usize,
            MaxFeatures::Log2 => (d as f64).log2() as usize,
            MaxFeatures::Fraction(f) => (f * d as f64) as usize,
        };
        k.clamp(1, d.max(1))
    }
}

impl std::str::FromStr for MaxFeatures {
    type Err = IdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" | "none" => Ok(MaxFeatures::All),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "log2" => Ok(MaxFeatures::Log2),
            other => match other.parse::<f64>() {
                Ok(f) if f > 0.0 && f <= 1.0 => Ok(MaxFeatures::Fraction(f)),
                _ => Err(IdsError::Config(format!("invalid max_features `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitter {
    /// Exhaustive search over midpoints between consecutive distinct values.
    Best,
    /// One uniform cut-point per candidate feature.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub splitter: Splitter,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            splitter: Splitter::Best,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(IdsError::Config("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(IdsError::Config("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        class_counts: Vec<u32>,
        prediction: u32,
    },
}

/// A fitted tree; node 0 is the root, nodes are stored in pre-order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_features: usize,
    pub n_classes: usize,
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_for(&self, x: &[f32]) -> &[u32] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { class_counts, .. } => return class_counts,
            }
        }
    }

    /// Leaf class frequencies for one row.
    pub fn proba_row(&self, x: &[f32], out: &mut [f64]) {
        let counts = self.leaf_for(x);
        let n: u32 = counts.iter().sum();
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = f64::from(c) / f64::from(n);
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Lowest index among the maxima.
pub(crate) fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (j, &c) in v.iter().enumerate().skip(1) {
        if c > v[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn check_xy(x: &FeatureMatrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.is_empty() {
        return Err(IdsError::Empty("cannot fit a model on zero rows".into()));
    }
    if x.rows() != y.len() {
        return Err(IdsError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(IdsError::CodeOutOfRange {
            code: bad,
            classes: n_classes,
        });
    }
    Ok(())
}

/// Fit one tree on all rows. Randomness (feature order, random cut-points)
/// comes from streams keyed by `(params.seed, 0, node index)`.
pub fn dt_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
) -> Result<Tree> {
    check_xy(x, y, n_classes)?;
    params.validate()?;
    let rows: Vec<u32> = (0..x.rows() as u32).collect();
    Ok(grow(x, y, n_classes, params, 0, rows))
}

/// Grow a tree on the given (possibly repeated) row indices.
pub(crate) fn grow(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    tree_index: u64,
    mut rows: Vec<u32>,
) -> Tree {
    let mut builder = Builder {
        x,
        y,
        n_classes,
        params,
        tree_index,
        mtry: params.max_features.resolve(x.cols()),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(rows.len()),
    };
    let n = rows.len();
    builder.build(&mut rows, 0, n, 0);
    Tree {
        n_features: x.cols(),
        n_classes,
        nodes: builder.nodes,
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    tree_index: u64,
    mtry: usize,
    nodes: Vec<Node>,
    scratch: Vec<(f32, usize)>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f32,
    decrease: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.decrease > o.decrease
                    || (self.decrease == o.decrease
                        && (self.feature, self.threshold) < (o.feature, o.threshold))
            }
        }
    }
}

impl Builder<'_> {
    /// Builds the subtree over `rows[lo..hi]`; returns its node index.
    fn build(&mut self, rows: &mut [u32], lo: usize, hi: usize, depth: usize) -> u32 {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class_counts: Vec::new(),
            prediction: 0,
        });
        let mut counts = vec![0u32; self.n_classes];
        for &r in &rows[lo..hi] {
            counts[self.y[r as usize]] += 1;
        }
        let m = hi - lo;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || depth_capped || m < self.params.min_samples_split {
            None
        } else {
            self.find_split(&rows[lo..hi], &counts, id as u64)
        };

        match split {
            None => {
                let prediction = argmax_u32(&counts) as u32;
                self.nodes[id] = Node::Leaf {
                    class_counts: counts,
                    prediction,
                };
            }
            Some(c) => {
                // partition in place: left block then right block
                let slice = &mut rows[lo..hi];
                let mut mid = 0;
                for i in 0..slice.len() {
                    if self.x.get(slice[i] as usize, c.feature) <= c.threshold {
                        slice.swap(i, mid);
                        mid += 1;
                    }
                }
                let left = self.build(rows, lo, lo + mid, depth + 1);
                let right = self.build(rows, lo + mid, hi, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: c.feature as u32,
                    threshold: c.threshold,
                    left,
                    right,
                };
            }
        }
        id as u32
    }

    fn find_split(&mut self, rows: &[u32], counts: &[u32], node: u64) -> Option<Candidate> {
        let mut rng = rng::stream(self.params.seed, Domain::TreeNode, &[self.tree_index, node]);
        let mut features: Vec<usize> = (0..self.x.cols()).collect();
        features.shuffle(&mut rng);
        let parent: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
        let m = rows.len() as f64;
        let parent_imp = self.params.criterion.of_counts(&parent, m);

        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        // keep drawing features until `mtry` non-constant ones have been evaluated
        for &f in &features {
            if visited >= self.mtry {
                break;
            }
            let found = match self.params.splitter {
                Splitter::Best => self.best_threshold(rows, f, &parent, parent_imp),
                Splitter::Random => self.random_threshold(rows, f, &parent, parent_imp, &mut rng),
            };
            match found {
                Err(()) => continue,
                Ok(c) => {
                    visited += 1;
                    if let Some(c) = c {
                        if c.beats(&best) {
                            best = Some(c);
                        }
                    }
                }
            }
        }
        // zero-gain splits are kept: XOR-like nodes have no positive-gain split
        // at the first level but become separable one level down
        best.filter(|c| c.decrease >= -1e-12)
    }

    /// `Err(())` when the feature is constant over the node.
    fn best_threshold(
        &mut self,
        rows: &[u32],
        f: usize,
        parent: &[f64],
        parent_imp: f64,
    ) -> std::result::Result<Option<Candidate>, ()> {
        let crit = self.params.criterion;
        let min_leaf = self.params.min_samples_leaf;
        self.scratch.clear();
        self.scratch
            .extend(rows.iter().map(|&r| (self.x.get(r as usize, f), self.y[r as usize])));
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let vals = &self.scratch;
        if vals[0].0 == vals[vals.len() - 1].0 {
            return Err(());
        }
        let m = vals.len();
        let mut left = vec![0.0f64; parent.len()];
        let mut right = parent.to_vec();
        let mut best: Option<Candidate> = None;
        for i in 0..m - 1 {
            let (v, c) = vals[i];
            left[c] += 1.0;
            right[c] -= 1.0;
            let next = vals[i + 1].0;
            if v == next {
                continue;
            }
            let nl = i + 1;
            let nr = m - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (nlf, nrf) = (nl as f64, nr as f64);
            let weighted =
                (nlf * crit.of_counts(&left, nlf) + nrf * crit.of_counts(&right, nrf)) / m as f64;
            let cand = Candidate {
                feature: f,
                threshold: midpoint(v, next),
                decrease: parent_imp - weighted,
            };
            if cand.beats(&best) {
                best = Some(cand);
            }
        }
        Ok(best)
    }

    fn random_threshold(
        &mut self,
        rows: &[u32],
        f: usize,
        parent: &[f64],
        parent_imp: f64,
        rng: &mut ChaCha8Rng,
    ) -> std::result::Result<Option<Candidate>, ()> {
        let crit = self.params.criterion;
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for &r in rows {
            let v = self.x.get(r as usize, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == hi {
            return Err(());
        }
        let u: f64 = rng.random();
        let mut t = (f64::from(lo) + u * (f64::from(hi) - f64::from(lo))) as f32;
        if t >= hi {
            t = lo;
        }
        let mut left = vec![0.0f64; parent.len()];
        for &r in rows {
            if self.x.get(r as usize, f) <= t {
                left[self.y[r as usize]] += 1.0;
            }
        }
        let nl: f64 = left.iter().sum();
        let nr = rows.len() as f64 - nl;
        if (nl as usize) < self.params.min_samples_leaf || (nr as usize) < self.params.min_samples_leaf {
            return Ok(None);
        }
        let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
        let weighted = (nl * crit.of_counts(&left, nl) + nr * crit.of_counts(&right, nr))
            / rows.len() as f64;
        Ok(Some(Candidate {
            feature: f,
            threshold: t,
            decrease: parent_imp - weighted,
        }))
    }
}

/// A threshold `t` with `a <= t < b` for consecutive distinct values `a < b`.
pub(crate) fn midpoint(a: f32, b: f32) -> f32 {
    let mid = ((f64::from(a) + f64::from(b)) / 2.0) as f32;
    if mid >= b {
        a
    } else {
        mid.max(a)
    }
}

pub fn tree_predict_proba(tree: &Tree, x: &FeatureMatrix) -> Result<RealMatrix> {
    check_width(tree.n_features, x.cols())?;
    let c = tree.n_classes;
    let mut out = RealMatrix::zeros(x.rows(), c);
    for i in 0..x.rows() {
        tree.proba_row(x.row(i), out.row_mut(i));
    }
    Ok(out)
}

pub fn tree_predict(tree: &Tree, x: &FeatureMatrix) -> Result<Vec<usize>> {
    check_width(tree.n_features, x.cols())?;
    Ok(x.iter_rows().map(|r| argmax_u32(tree.leaf_for(r))).collect())
}
