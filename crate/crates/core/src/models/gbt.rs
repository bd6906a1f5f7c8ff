//! Newton boosting of regression trees on the logistic / softmax loss with
//! the regularised objective `Σ loss + γT + ½λ‖w‖²`.
//!
//! Trees are grown level by level with exact greedy split search. Each
//! feature is presorted once; a level costs one pass over every feature.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_xy, midpoint};
use crate::error::{IdsError, Result};
use crate::matrix::{check_width, FeatureMatrix, RealMatrix};

const MIN_HESSIAN: f64 = 1e-16;
const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub max_depth: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 100,
            learning_rate: 0.3,
            gamma: 0.0,
            lambda: 1.0,
            max_depth: 6,
            min_child_weight: 0.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(IdsError::Config("learning_rate must lie in (0, 1]".into()));
        }
        if self.gamma < 0.0 || self.lambda < 0.0 || self.min_child_weight < 0.0 {
            return Err(IdsError::Config("gamma, lambda and min_child_weight must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    BinaryLogistic,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegNode {
    Split {
        feature: u32,
        threshold: f32,
        left: u32,
        right: u32,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn output(&self, x: &[f32]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                RegNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                RegNode::Leaf { weight } => return *weight,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub objective: Objective,
    pub n_features: usize,
    pub n_classes: usize,
    pub params: GbtParams,
    /// Initial margin per output: one for binary, one per class for softmax.
    pub base_scores: Vec<f64>,
    /// `rounds[r][k]`: tree for output `k` in round `r`.
    pub rounds: Vec<Vec<RegTree>>,
    /// Mean training log-loss after each round.
    pub train_loss_trace: Vec<f64>,
}

impl GbtModel {
    fn outputs(&self) -> usize {
        self.base_scores.len()
    }

    /// Raw margins for one row.
    pub fn margins(&self, x: &[f32]) -> Vec<f64> {
        let mut f = self.base_scores.clone();
        for round in &self.rounds {
            for (k, t) in round.iter().enumerate() {
                f[k] += self.params.learning_rate * t.output(x);
            }
        }
        f
    }
}

/// Optimal leaf weight `−G / (H + λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Structure-score gain of splitting a leaf into (L, R), net of `γ`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// ln(1 + e^z), stable for large |z|
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn softmax_in_place(f: &mut [f64]) {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in f.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    f.iter_mut().for_each(|v| *v /= s);
}

fn mean_loss(objective: Objective, margins: &[Vec<f64>], y: &[usize]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(f, &c)| match objective {
            Objective::BinaryLogistic => softplus(f[0]) - if c == 1 { f[0] } else { 0.0 },
            Objective::Softmax => {
                let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - f[c]
            }
        })
        .sum();
    total / y.len() as f64
}

/// Newton boosting. Two classes use a single logistic output (class 1
/// positive); more use one tree per class per round under softmax.
pub fn gbt_fit(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &GbtParams,
) -> Result<GbtModel> {
    check_xy(x, y, n_classes)?;
    params.validate()?;
    let n = y.len();
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(IdsError::InvalidArgument(
            "boosting needs at least two classes in the training data".into(),
        ));
    }
    let (objective, base_scores) = if n_classes == 2 {
        let p = (counts[1] as f64 / n as f64).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        (Objective::BinaryLogistic, vec![(p / (1.0 - p)).ln()])
    } else {
        let base = counts
            .iter()
            .map(|&c| (c as f64 / n as f64).max(PROB_CLAMP).ln())
            .collect();
        (Objective::Softmax, base)
    };
    let outputs = base_scores.len();
    let sorted = presort(x);
    let mut margins: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut model = GbtModel {
        objective,
        n_features: x.cols(),
        n_classes,
        params: params.clone(),
        base_scores,
        rounds: Vec::with_capacity(params.n_rounds),
        train_loss_trace: Vec::with_capacity(params.n_rounds),
    };

    for _ in 0..params.n_rounds {
        // gradients and hessians per output
        let mut grads = vec![vec![0.0; n]; outputs];
        let mut hess = vec![vec![0.0; n]; outputs];
        for i in 0..n {
            match objective {
                Objective::BinaryLogistic => {
                    let p = sigmoid(margins[i][0]);
                    grads[0][i] = p - if y[i] == 1 { 1.0 } else { 0.0 };
                    hess[0][i] = (p * (1.0 - p)).max(MIN_HESSIAN);
                }
                Objective::Softmax => {
                    let mut p = margins[i].clone();
                    softmax_in_place(&mut p);
                    for k in 0..outputs {
                        grads[k][i] = p[k] - if y[i] == k { 1.0 } else { 0.0 };
                        hess[k][i] = (p[k] * (1.0 - p[k])).max(MIN_HESSIAN);
                    }
                }
            }
        }
        let trees: Vec<RegTree> = (0..outputs)
            .into_par_iter()
            .map(|k| grow_regression(x, &sorted, &grads[k], &hess[k], params))
            .collect();
        for (i, f) in margins.iter_mut().enumerate() {
            for (k, t) in trees.iter().enumerate() {
                f[k] += params.learning_rate * t.output(x.row(i));
            }
        }
        model.rounds.push(trees);
        model.train_loss_trace.push(mean_loss(objective, &margins, y));
    }
    Ok(model)
}

fn presort(x: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, f)
                    .total_cmp(&x.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f32,
    gain: f64,
}

const NO_NODE: u32 = u32::MAX;

fn grow_regression(
    x: &FeatureMatrix,
    sorted: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    p: &GbtParams,
) -> RegTree {
    let n = g.len();
    // position[i]: index into `frontier` of the open node holding row i
    let mut position = vec![0u32; n];
    let mut nodes: Vec<RegNode> = vec![RegNode::Leaf { weight: 0.0 }];
    // (node id, G, H)
    let mut frontier: Vec<(usize, f64, f64)> = vec![(0, g.iter().sum(), h.iter().sum())];

    for depth in 0..=p.max_depth {
        if frontier.is_empty() {
            break;
        }
        let best: Vec<Option<SplitChoice>> = if depth == p.max_depth {
            vec![None; frontier.len()]
        } else {
            let per_feature: Vec<Vec<Option<SplitChoice>>> = (0..x.cols())
                .into_par_iter()
                .map(|f| scan_feature(x, &sorted[f], f, &position, &frontier, g, h, p))
                .collect();
            let mut best: Vec<Option<SplitChoice>> = vec![None; frontier.len()];
            // features in ascending order; ties keep the earlier feature
            for choices in per_feature {
                for (b, c) in best.iter_mut().zip(choices) {
                    if let Some(c) = c {
                        let take = match b {
                            None => true,
                            Some(o) => c.gain > o.gain,
                        };
                        if take {
                            *b = Some(c);
                        }
                    }
                }
            }
            best
        };

        let mut next: Vec<(usize, f64, f64)> = Vec::new();
        let mut remap: Vec<(u32, u32)> = vec![(NO_NODE, NO_NODE); frontier.len()];
        let mut child_stats: Vec<[(f64, f64); 2]> = vec![[(0.0, 0.0); 2]; frontier.len()];
        for i in 0..n {
            let slot = position[i];
            if slot == NO_NODE {
                continue;
            }
            if let Some(c) = best[slot as usize] {
                let side = usize::from(x.get(i, c.feature) > c.threshold);
                child_stats[slot as usize][side].0 += g[i];
                child_stats[slot as usize][side].1 += h[i];
            }
        }
        for (slot, &(id, gs, hs)) in frontier.iter().enumerate() {
            match best[slot] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(RegNode::Leaf { weight: 0.0 });
                    nodes.push(RegNode::Leaf { weight: 0.0 });
                    nodes[id] = RegNode::Split {
                        feature: c.feature as u32,
                        threshold: c.threshold,
                        left: left as u32,
                        right: left as u32 + 1,
                        gain: c.gain,
                    };
                    let [(gl, hl), (gr, hr)] = child_stats[slot];
                    remap[slot] = (next.len() as u32, next.len() as u32 + 1);
                    next.push((left, gl, hl));
                    next.push((left + 1, gr, hr));
                }
                None => {
                    nodes[id] = RegNode::Leaf {
                        weight: leaf_weight(gs, hs, p.lambda),
                    };
                }
            }
        }
        for i in 0..n {
            let slot = position[i];
            if slot == NO_NODE {
                continue;
            }
            position[i] = match best[slot as usize] {
                Some(c) => {
                    if x.get(i, c.feature) <= c.threshold {
                        remap[slot as usize].0
                    } else {
                        remap[slot as usize].1
                    }
                }
                None => NO_NODE,
            };
        }
        frontier = next;
    }
    RegTree { nodes }
}

/// Best split of `feature` for every open node, walking rows in sorted order.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &FeatureMatrix,
    order: &[u32],
    feature: usize,
    position: &[u32],
    frontier: &[(usize, f64, f64)],
    g: &[f64],
    h: &[f64],
    p: &GbtParams,
) -> Vec<Option<SplitChoice>> {
    let k = frontier.len();
    let mut gl = vec![0.0; k];
    let mut hl = vec![0.0; k];
    let mut last = vec![f32::NAN; k];
    let mut best: Vec<Option<SplitChoice>> = vec![None; k];
    for &r in order {
        let r = r as usize;
        let slot = position[r];
        if slot == NO_NODE {
            continue;
        }
        let s = slot as usize;
        let v = x.get(r, feature);
        if !last[s].is_nan() && v > last[s] {
            let (_, gt, ht) = frontier[s];
            let (gr, hr) = (gt - gl[s], ht - hl[s]);
            if hl[s] >= p.min_child_weight && hr >= p.min_child_weight {
                let gain = split_gain(gl[s], hl[s], gr, hr, p.lambda, p.gamma);
                // strict: the lowest threshold wins ties
                if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(SplitChoice {
                        feature,
                        threshold: midpoint(last[s], v),
                        gain,
                    });
                }
            }
        }
        gl[s] += g[r];
        hl[s] += h[r];
        last[s] = v;
    }
    best
}

pub fn gbt_predict_proba(m: &GbtModel, x: &FeatureMatrix) -> Result<RealMatrix> {
    check_width(m.n_features, x.cols())?;
    let c = m.n_classes;
    let rows: Vec<f64> = (0..x.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut f = m.margins(x.row(i));
            match m.objective {
                Objective::BinaryLogistic => {
                    let p = sigmoid(f[0]);
                    vec![1.0 - p, p]
                }
                Objective::Softmax => {
                    softmax_in_place(&mut f);
                    f
                }
            }
        })
        .collect();
    debug_assert_eq!(rows.len(), x.rows() * c);
    debug_assert!(m.outputs() == 1 || m.outputs() == c);
    RealMatrix::from_vec(x.rows(), c, rows)
}

pub fn gbt_predict(m: &GbtModel, x: &FeatureMatrix) -> Result<Vec<usize>> {
    let p = gbt_predict_proba(m, x)?;
    Ok(p.iter_rows().map(crate::matrix::argmax).collect())
}
