//! Principal component analysis through the covariance matrix.
//!
//! Fitting centres each feature, rescales it to unit variance, forms the
//! covariance `C = (1/n) Σ x xᵀ`, diagonalises it with cyclic Jacobi
//! rotations and keeps the `k` leading eigenvectors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::{check_width, FeatureMatrix, RealMatrix};

/// Off-diagonal Frobenius norm at which Jacobi iteration stops.
pub const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    /// Sorted non-increasing.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`; largest-magnitude entry positive.
    pub vectors: RealMatrix,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigensolver for a symmetric `n × n` matrix.
pub fn symmetric_eigen(a: &RealMatrix) -> Result<SymmetricEigen> {
    let n = a.rows();
    check_width(n, a.cols())?;
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a.get(i, j), a.get(j, i));
            if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                return Err(IdsError::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut m = a.clone();
    let mut v = RealMatrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    let off_norm = |m: &RealMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m.get(i, j) * m.get(i, j);
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&m) >= JACOBI_TOL && sweeps < MAX_SWEEPS {
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // M ← Jᵀ M J, V ← V J
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
        sweeps += 1;
    }
    if off_norm(&m) >= JACOBI_TOL {
        return Err(IdsError::Invariant(format!(
            "Jacobi did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = RealMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|r| v.get(r, src)).collect();
        let pivot = col
            .iter()
            .enumerate()
            .fold(0, |b, (i, x)| if x.abs() > col[b].abs() { i } else { b });
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (r, x) in col.iter().enumerate() {
            vectors.set(r, dst, sign * x);
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Fitted PCA projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Per-feature standard deviation after centring; 1 for constant features.
    pub scale: Vec<f64>,
    /// `d_in × k_out`, orthonormal columns, ordered by eigenvalue.
    pub components: RealMatrix,
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn d_in(&self) -> usize {
        self.mean.len()
    }

    pub fn k_out(&self) -> usize {
        self.eigenvalues.len()
    }
}

pub fn pca_fit(x: &FeatureMatrix, k: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        return Err(IdsError::InvalidArgument("PCA needs at least two rows".into()));
    }
    if k == 0 || k > d {
        return Err(IdsError::InvalidArgument(format!(
            "PCA k = {k} must lie in 1..={d}"
        )));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    let mut lo = vec![f32::INFINITY; d];
    let mut hi = vec![f32::NEG_INFINITY; d];
    for row in x.iter_rows() {
        for j in 0..d {
            mean[j] += f64::from(row[j]);
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![0.0; d];
    for row in x.iter_rows() {
        for j in 0..d {
            let c = f64::from(row[j]) - mean[j];
            var[j] += c * c;
        }
    }
    let scale: Vec<f64> = (0..d)
        .map(|j| if lo[j] == hi[j] { 1.0 } else { (var[j] / nf).sqrt() })
        .collect();

    // covariance of the centred, rescaled rows; rows are summed in order so
    // the result does not depend on the thread count
    let z = standardize(&mean, &scale, x);
    let mut cov = RealMatrix::zeros(d, d);
    for row in z.iter_rows() {
        for i in 0..d {
            let ri = row[i];
            let out = cov.row_mut(i);
            for j in i..d {
                out[j] += ri * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / nf;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    let total_variance = (0..d).map(|i| cov.get(i, i)).sum();
    let eig = symmetric_eigen(&cov)?;
    let mut components = RealMatrix::zeros(d, k);
    for r in 0..d {
        for c in 0..k {
            components.set(r, c, eig.vectors.get(r, c));
        }
    }
    Ok(PcaModel {
        mean,
        scale,
        components,
        eigenvalues: eig.values[..k].iter().map(|&v| v.max(0.0)).collect(),
        total_variance,
    })
}

fn standardize(mean: &[f64], scale: &[f64], x: &FeatureMatrix) -> RealMatrix {
    let d = x.cols();
    let mut z = x.to_f64();
    if d > 0 {
        z.as_mut_slice().par_chunks_mut(d).for_each(|row| {
            for j in 0..d {
                row[j] = (row[j] - mean[j]) / scale[j];
            }
        });
    }
    z
}

/// Centred, rescaled rows in `f64`; the space the components live in.
pub fn pca_standardize(m: &PcaModel, x: &FeatureMatrix) -> Result<RealMatrix> {
    check_width(m.d_in(), x.cols())?;
    Ok(standardize(&m.mean, &m.scale, x))
}

/// Projections `Wᵀ((x − μ)/σ)` in `f64`.
pub fn pca_project(m: &PcaModel, x: &FeatureMatrix) -> Result<RealMatrix> {
    let z = pca_standardize(m, x)?;
    let (d, k) = (m.d_in(), m.k_out());
    let rows: Vec<f64> = (0..z.rows())
        .into_par_iter()
        .flat_map_iter(|i| {
            let zi = z.row(i);
            (0..k).map(move |c| (0..d).map(|r| m.components.get(r, c) * zi[r]).sum::<f64>())
        })
        .collect();
    RealMatrix::from_vec(z.rows(), k, rows)
}

/// Projections rounded to `f32` for downstream models.
pub fn pca_transform(m: &PcaModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    Ok(pca_project(m, x)?.to_f32())
}

/// Map projections back to the standardised input space: `Y Wᵀ`.
pub fn pca_reconstruct(m: &PcaModel, y: &RealMatrix) -> Result<RealMatrix> {
    check_width(m.k_out(), y.cols())?;
    let (d, k) = (m.d_in(), m.k_out());
    let mut out = RealMatrix::zeros(y.rows(), d);
    for i in 0..y.rows() {
        for r in 0..d {
            let v = (0..k).map(|c| y.get(i, c) * m.components.get(r, c)).sum();
            out.set(i, r, v);
        }
    }
    Ok(out)
}

/// Share of total variance carried by each kept component.
pub fn explained_variance_ratio(m: &PcaModel) -> Vec<f64> {
    if m.total_variance <= 0.0 {
        return vec![0.0; m.k_out()];
    }
    m.eigenvalues
        .iter()
        .map(|v| (v / m.total_variance).clamp(0.0, 1.0))
        .collect()
}

/// Output dimensions over input dimensions.
pub fn reduction_ratio(m: &PcaModel) -> f64 {
    m.k_out() as f64 / m.d_in() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(rows: &[Vec<f32>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn jacobi_two_by_two() {
        let a = RealMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors.get(0, 0) - r).abs() < 1e-12 && (e.vectors.get(1, 0) - r).abs() < 1e-12);
        assert!((e.vectors.get(0, 1).abs() - r).abs() < 1e-12);
        assert!((e.vectors.get(0, 1) + e.vectors.get(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn rank_one_line() {
        let x = fm(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![5.0, 5.0]]);
        let m = pca_fit(&x, 2).unwrap();
        // unit-scaled covariance is [[1,1],[1,1]]
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-9);
        assert!(m.eigenvalues[1].abs() < 1e-9);
        let r = explained_variance_ratio(&m);
        assert!((r[0] - 1.0).abs() < 1e-9 && r[1].abs() < 1e-9);
    }

    #[test]
    fn constructed_covariance() {
        // four points with covariance [[2,1],[1,2]] about the origin
        let a = (1.5f32).sqrt();
        let b = (0.5f32).sqrt();
        let x = fm(&[vec![a, a], vec![-a, -a], vec![b, -b], vec![-b, b]]);
        let m = pca_fit(&x, 2).unwrap();
        // unit scaling turns it into [[1, .5], [.5, 1]]
        assert!((m.eigenvalues[0] - 1.5).abs() < 1e-6, "{:?}", m.eigenvalues);
        assert!((m.eigenvalues[1] - 0.5).abs() < 1e-6);
        let r = explained_variance_ratio(&m);
        assert!((r[0] - 0.75).abs() < 1e-6 && (r[1] - 0.25).abs() < 1e-6);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components.get(0, 0) - h).abs() < 1e-9);
        assert!((m.components.get(1, 0) - h).abs() < 1e-9);
    }

    #[test]
    fn hand_projection_three_by_three() {
        // diagonal-variance data: eigenvectors are the axes
        let x = fm(&[
            vec![3.0, 0.0, 0.0],
            vec![-3.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, -2.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, -1.0],
        ]);
        let m = pca_fit(&x, 3).unwrap();
        // σ_j = sqrt(18/6), sqrt(8/6), sqrt(2/6); every scaled column has variance 1
        let s = [3.0f64.sqrt(), (4.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt()];
        for (a, b) in m.scale.iter().zip(s) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = pca_project(&m, &fm(&[vec![3.0, 2.0, 1.0]])).unwrap();
        // Wᵀz by hand for z = (3/σ1, 2/σ2, 1/σ3)
        let z = [3.0 / s[0], 2.0 / s[1], 1.0 / s[2]];
        for c in 0..3 {
            let expect: f64 = (0..3).map(|r| m.components.get(r, c) * z[r]).sum();
            assert!((y.get(0, c) - expect).abs() < 1e-12);
        }
        let mut sq: Vec<f64> = y.row(0).iter().map(|v| v * v).collect();
        sq.sort_by(f64::total_cmp);
        let mut zz: Vec<f64> = z.iter().map(|v| v * v).collect();
        zz.sort_by(f64::total_cmp);
        for (a, b) in sq.iter().zip(zz) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_row_maps_to_zero() {
        let x = fm(&[vec![1.0, 4.0], vec![3.0, 0.0], vec![2.0, 5.0]]);
        let m = pca_fit(&x, 2).unwrap();
        let mean: Vec<f32> = m.mean.iter().map(|&v| v as f32).collect();
        let y = pca_project(&m, &fm(&[mean])).unwrap();
        assert!(y.as_slice().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn constant_feature_gets_unit_scale() {
        let x = fm(&[vec![0.1, 1.0], vec![0.1, 2.0], vec![0.1, 4.0]]);
        let m = pca_fit(&x, 1).unwrap();
        assert_eq!(m.scale[0], 1.0);
        assert!((m.total_variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratios() {
        let mk = |d: usize, k: usize| PcaModel {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
            components: RealMatrix::zeros(d, k),
            eigenvalues: vec![0.0; k],
            total_variance: 0.0,
        };
        assert!((reduction_ratio(&mk(45, 10)) - 0.2222).abs() < 1e-4);
        assert!((reduction_ratio(&mk(79, 10)) - 0.1265).abs() < 1e-4);
        assert_eq!(reduction_ratio(&mk(7, 7)), 1.0);
    }

    #[test]
    fn errors() {
        let x = fm(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(pca_fit(&x, 3).is_err());
        assert!(pca_fit(&x, 0).is_err());
        assert!(pca_fit(&fm(&[vec![1.0, 2.0]]), 1).is_err());
        let m = pca_fit(&x, 1).unwrap();
        assert!(pca_transform(&m, &FeatureMatrix::zeros(1, 3)).is_err());
        let asym = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(symmetric_eigen(&asym).is_err());
    }
}
