use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_assign, kmeans_fit};
use crate::error::{IdsError, Result};
use crate::matrix::{argmax, check_width, FeatureMatrix, RealMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
// keeps empty components from producing 0/0 in the M-step
const RESP_EPS: f64 = 10.0 * f64::EPSILON;

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: RealMatrix,
    pub variances: RealMatrix,
    /// Mean per-sample log-likelihood evaluated before each M-step; the last
    /// entry belongs to the returned parameters.
    pub log_likelihood_trace: Vec<f64>,
    pub cov_floor: f64,
    pub iterations_run: usize,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    /// Unnormalised log posterior `ln w_j + ln N(x | μ_j, σ²_j)` per component.
    fn log_joint(&self, x: &[f32], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((&v, &mu), &var) in x.iter().zip(self.means.row(j)).zip(self.variances.row(j)) {
                let t = f64::from(v) - mu;
                acc += LN_2PI + var.ln() + t * t / var;
            }
            *o = self.weights[j].ln() - 0.5 * acc;
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Posterior probabilities (rows normalised in log space) and each row's log-likelihood.
fn e_step(m: &GmmModel, x: &FeatureMatrix) -> (RealMatrix, Vec<f64>) {
    let k = m.k();
    let rows: Vec<(Vec<f64>, f64)> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let mut lj = vec![0.0; k];
            m.log_joint(x.row(i), &mut lj);
            let lse = log_sum_exp(&lj);
            lj.iter_mut().for_each(|v| *v = (*v - lse).exp());
            (lj, lse)
        })
        .collect();
    let ll = rows.iter().map(|r| r.1).collect();
    let data = rows.into_iter().flat_map(|r| r.0).collect();
    (RealMatrix::from_vec(x.rows(), k, data).expect("n × k"), ll)
}

fn m_step(m: &mut GmmModel, x: &FeatureMatrix, resp: &RealMatrix) {
    let (k, d) = (m.k(), x.cols());
    let mut nk = vec![0.0f64; k];
    let mut sums = RealMatrix::zeros(k, d);
    for i in 0..x.rows() {
        let r = resp.row(i);
        for j in 0..k {
            nk[j] += r[j];
            for (s, &v) in sums.row_mut(j).iter_mut().zip(x.row(i)) {
                *s += r[j] * f64::from(v);
            }
        }
    }
    nk.iter_mut().for_each(|v| *v += RESP_EPS);
    for j in 0..k {
        for s in sums.row_mut(j) {
            *s /= nk[j];
        }
    }
    let mut sq = RealMatrix::zeros(k, d);
    for i in 0..x.rows() {
        let r = resp.row(i);
        for j in 0..k {
            let mu = sums.row(j).to_vec();
            for ((s, &v), mu) in sq.row_mut(j).iter_mut().zip(x.row(i)).zip(mu) {
                let t = f64::from(v) - mu;
                *s += r[j] * t * t;
            }
        }
    }
    for j in 0..k {
        let floor = m.cov_floor;
        for s in sq.row_mut(j) {
            *s = (*s / nk[j]).max(floor);
        }
    }
    let total: f64 = nk.iter().sum();
    m.weights = nk.iter().map(|v| v / total).collect();
    m.means = sums;
    m.variances = sq;
}

/// EM for a diagonal-covariance mixture, initialised from a k-means run with
/// the same seed. Stops when the mean log-likelihood improves by less than `tol`.
pub fn gmm_fit(
    x: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    cov_floor: f64,
) -> Result<GmmModel> {
    if !(cov_floor > 0.0) {
        return Err(IdsError::InvalidArgument("cov_floor must be positive".into()));
    }
    let km = kmeans_fit(x, k, seed, max_iter, tol)?;
    let (labels, _) = kmeans_assign(&km, x)?;
    let d = x.cols();
    let n = x.rows() as f64;

    // hard k-means responsibilities give the initial M-step
    let mut resp = RealMatrix::zeros(x.rows(), k);
    for (i, &l) in labels.iter().enumerate() {
        resp.set(i, l, 1.0);
    }
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: km.centroids.clone(),
        variances: RealMatrix::from_vec(k, d, vec![1.0; k * d])?,
        log_likelihood_trace: Vec::new(),
        cov_floor,
        iterations_run: 0,
    };
    m_step(&mut model, x, &resp);
    debug_assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9 || n == 0.0);

    for iter in 0..=max_iter {
        let (r, ll) = e_step(&model, x);
        let mean_ll = ll.iter().sum::<f64>() / n;
        let improved = model
            .log_likelihood_trace
            .last()
            .map_or(f64::INFINITY, |prev| mean_ll - prev);
        model.log_likelihood_trace.push(mean_ll);
        if iter == max_iter || improved < tol {
            break;
        }
        m_step(&mut model, x, &r);
        model.iterations_run += 1;
    }
    Ok(model)
}

/// Row-stochastic `n × k` posterior matrix.
pub fn gmm_responsibilities(m: &GmmModel, x: &FeatureMatrix) -> Result<RealMatrix> {
    check_width(m.dim(), x.cols())?;
    Ok(e_step(m, x).0)
}

/// Most probable component per row, lowest index on ties.
pub fn gmm_predict(m: &GmmModel, x: &FeatureMatrix) -> Result<Vec<usize>> {
    let r = gmm_responsibilities(m, x)?;
    Ok(r.iter_rows().map(argmax).collect())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn one_d(seed: u64) -> FeatureMatrix {
        let mut rng = rng::stream(seed, Domain::Synth, &[]);
        let mut v = Vec::new();
        for c in [-5.0, 5.0] {
            for _ in 0..200 {
                let z: f64 = rng.sample(StandardNormal);
                v.push((c + 0.5 * z) as f32);
            }
        }
        FeatureMatrix::from_vec(400, 1, v).unwrap()
    }

    #[test]
    fn single_component_closed_form() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![6.0, 0.0]]).unwrap();
        let m = gmm_fit(&x, 1, 0, 50, 1e-9, 1e-6).unwrap();
        assert!((m.means.get(0, 0) - 3.0).abs() < 1e-9);
        // population variance (4 + 1 + 9) / 3
        assert!((m.variances.get(0, 0) - 14.0 / 3.0).abs() < 1e-9);
        assert_eq!(m.variances.get(0, 1), 1e-6);
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
        let r = gmm_responsibilities(&m, &x).unwrap();
        assert!(r.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn two_blobs_recovered() {
        let x = one_d(1);
        let m = gmm_fit(&x, 2, 3, 300, 1e-6, 1e-6).unwrap();
        let mut means: Vec<f64> = m.means.column(0);
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.1, "{means:?}");
        assert!((means[1] - 5.0).abs() < 0.1, "{means:?}");
        for w in &m.weights {
            assert!((w - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn responsibilities_are_row_stochastic_and_ll_monotone() {
        for seed in 0..5 {
            let x = one_d(seed);
            let m = gmm_fit(&x, 3, seed, 200, 1e-10, 1e-6).unwrap();
            let r = gmm_responsibilities(&m, &x).unwrap();
            for row in r.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for w in m.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-7, "{:?}", m.log_likelihood_trace);
            }
            assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(m.variances.as_slice().iter().all(|&v| v >= 1e-6));
        }
    }

    #[test]
    fn point_at_a_far_mean_belongs_to_it() {
        let m = GmmModel {
            weights: vec![0.5, 0.5],
            means: RealMatrix::from_rows(&[vec![0.0], vec![20.0]]).unwrap(),
            variances: RealMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            log_likelihood_trace: vec![],
            cov_floor: 1e-6,
            iterations_run: 0,
        };
        let x = FeatureMatrix::from_rows(&[vec![0.0]]).unwrap();
        let r = gmm_responsibilities(&m, &x).unwrap();
        // densities by hand: exp(0) against exp(−200), equal weights and variances
        let expected = 1.0 / (1.0 + (-200.0f64).exp());
        assert!((r.get(0, 0) - expected).abs() < 1e-12);
        assert!(r.get(0, 0) > 0.999);
    }

    #[test]
    fn errors() {
        let x = FeatureMatrix::zeros(2, 1);
        assert!(gmm_fit(&x, 3, 0, 10, 1e-3, 1e-6).is_err());
        let x = one_d(0);
        let m = gmm_fit(&x, 2, 0, 10, 1e-3, 1e-6).unwrap();
        assert!(gmm_responsibilities(&m, &FeatureMatrix::zeros(1, 2)).is_err());
    }
}
