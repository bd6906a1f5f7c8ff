use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::{check_width, FeatureMatrix, RealMatrix};
use crate::rng::{self, Domain};

/// Fitted k-means clusterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: RealMatrix,
    /// Sum of squared distances from each training point to its nearest centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }
}

#[inline]
fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let t = f64::from(a) - b;
            t * t
        })
        .sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
#[inline]
fn nearest(x: &[f32], centroids: &RealMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(x: &FeatureMatrix, centroids: &RealMatrix) -> Vec<(usize, f64)> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| nearest(x.row(i), centroids))
        .collect()
}

/// Lloyd's algorithm from greedy k-means++ seeding.
///
/// Stops when no centroid moves more than `tol` (Euclidean) or after
/// `max_iter` updates. A cluster left empty by an assignment step is moved
/// onto the point farthest from its own centroid.
pub fn kmeans_fit(
    x: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let n = x.rows();
    if k == 0 {
        return Err(IdsError::InvalidArgument("k must be at least 1".into()));
    }
    if k > n {
        return Err(IdsError::InvalidArgument(format!(
            "k = {k} exceeds the number of points ({n})"
        )));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(IdsError::InvalidArgument("k-means input contains non-finite values".into()));
    }
    let d = x.cols();
    let mut centroids = seed_centroids(x, k, seed);
    let mut trace = Vec::new();
    let mut iterations_run = 0;

    for _ in 0..max_iter {
        let assigned = assign_all(x, &centroids);
        trace.push(assigned.iter().map(|a| a.1).sum());

        let mut sums = RealMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assigned.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += f64::from(v);
            }
        }
        let mut far: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
            } else {
                // first index among the largest distances
                let (p, _) = far
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                for (s, &v) in sums.row_mut(c).iter_mut().zip(x.row(p)) {
                    *s = f64::from(v);
                }
                far[p] = 0.0;
            }
        }
        let shift = (0..k)
            .map(|c| {
                centroids
                    .row(c)
                    .iter()
                    .zip(sums.row(c))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = sums;
        iterations_run += 1;
        if shift < tol {
            break;
        }
    }

    let inertia: f64 = assign_all(x, &centroids).iter().map(|a| a.1).sum();
    trace.push(inertia);
    Ok(KMeansModel {
        centroids,
        inertia,
        iterations_run,
        inertia_trace: trace,
    })
}

/// Greedy k-means++: each new centre is the best of `2 + ln k` candidates
/// drawn with probability proportional to squared distance.
fn seed_centroids(x: &FeatureMatrix, k: usize, seed: u64) -> RealMatrix {
    let n = x.rows();
    let d = x.cols();
    let mut rng = rng::stream(seed, Domain::KMeans, &[]);
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = RealMatrix::zeros(k, d);

    let first = rng.random_range(0..n);
    set_row(&mut centroids, 0, x.row(first));
    let mut closest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| sq_dist(x.row(i), centroids.row(0)))
        .collect();

    for c in 1..k {
        let mut cumulative = Vec::with_capacity(n);
        let mut total = 0.0;
        for &v in &closest {
            total += v;
            cumulative.push(total);
        }
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                if total <= 0.0 {
                    rng.random_range(0..n)
                } else {
                    let r = rng.random::<f64>() * total;
                    cumulative.partition_point(|&s| s <= r).min(n - 1)
                }
            })
            .collect();

        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for &cand in &candidates {
            let cand_row: Vec<f64> = x.row(cand).iter().map(|&v| f64::from(v)).collect();
            let updated: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| closest[i].min(sq_dist(x.row(i), &cand_row)))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, cand, updated));
            }
        }
        let (_, chosen, updated) = best.expect("at least two candidates");
        set_row(&mut centroids, c, x.row(chosen));
        closest = updated;
    }
    centroids
}

fn set_row(m: &mut RealMatrix, i: usize, row: &[f32]) {
    for (t, &v) in m.row_mut(i).iter_mut().zip(row) {
        *t = f64::from(v);
    }
}

/// Nearest-centroid labels (lowest index on ties) and the full `n × k`
/// Euclidean distance matrix.
pub fn kmeans_assign(m: &KMeansModel, x: &FeatureMatrix) -> Result<(Vec<usize>, RealMatrix)> {
    check_width(m.dim(), x.cols())?;
    let k = m.k();
    let rows: Vec<(usize, Vec<f64>)> = (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let dist: Vec<f64> = (0..k)
                .map(|j| sq_dist(x.row(i), m.centroids.row(j)).sqrt())
                .collect();
            let mut best = 0;
            for j in 1..k {
                if dist[j] < dist[best] {
                    best = j;
                }
            }
            (best, dist)
        })
        .collect();
    let labels = rows.iter().map(|r| r.0).collect();
    let data = rows.into_iter().flat_map(|r| r.1).collect();
    Ok((labels, RealMatrix::from_vec(x.rows(), k, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn normal<R: Rng>(rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }

    fn blobs(seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = rng::stream(seed, Domain::Synth, &[]);
        let centers = [(0.0, 0.0), (10.0, 10.0)];
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..100 {
                rows.push(vec![
                    (cx + 0.1 * normal(&mut rng)) as f32,
                    (cy + 0.1 * normal(&mut rng)) as f32,
                ]);
                truth.push(c);
            }
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), truth)
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 8.0]]).unwrap();
        let m = kmeans_fit(&x, 1, 0, 100, 1e-9).unwrap();
        assert!((m.centroids.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((m.centroids.get(0, 1) - 4.0).abs() < 1e-12);
        // n · (population variance summed over dims) = 8 + 26
        assert!((m.inertia - 34.0).abs() < 1e-9);
    }

    #[test]
    fn two_points_two_clusters() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 1.0], vec![-3.0, 2.0]]).unwrap();
        let m = kmeans_fit(&x, 2, 11, 50, 1e-6).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut cs: Vec<Vec<f64>> = m.centroids.iter_rows().map(<[f64]>::to_vec).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![-3.0, 2.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn recovers_blob_centres() {
        let (x, truth) = blobs(3);
        let m = kmeans_fit(&x, 2, 5, 300, 1e-4).unwrap();
        for (cx, cy) in [(0.0, 0.0), (10.0, 10.0)] {
            let close = m.centroids.iter_rows().any(|c| {
                ((c[0] - cx).powi(2) + (c[1] - cy).powi(2)).sqrt() < 0.1
            });
            assert!(close, "no centroid near ({cx},{cy}): {:?}", m.centroids);
        }
        let (labels, _) = kmeans_assign(&m, &x).unwrap();
        // cluster ids are arbitrary; compare up to relabelling
        let agree = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        let agree = agree.max(labels.len() - agree);
        assert!(agree as f64 >= 0.99 * labels.len() as f64);
    }

    #[test]
    fn assignment_ties_and_zero_distance() {
        let m = KMeansModel {
            centroids: RealMatrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![5.0, 5.0]]).unwrap(),
            inertia: 0.0,
            iterations_run: 0,
            inertia_trace: vec![],
        };
        let x = FeatureMatrix::from_rows(&[vec![5.0, 5.0], vec![0.0, 0.0]]).unwrap();
        let (labels, dist) = kmeans_assign(&m, &x).unwrap();
        assert_eq!(labels, vec![2, 0]);
        assert_eq!(dist.get(0, 2), 0.0);
        assert!(kmeans_assign(&m, &FeatureMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn inertia_trace_never_increases() {
        for seed in 0..10 {
            let (x, _) = blobs(seed);
            let m = kmeans_fit(&x, 5, seed, 100, 1e-8).unwrap();
            for w in m.inertia_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            let recomputed: f64 = (0..x.rows()).map(|i| nearest(x.row(i), &m.centroids).1).sum();
            assert!((recomputed - m.inertia).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_k() {
        let x = FeatureMatrix::zeros(2, 1);
        assert!(kmeans_fit(&x, 3, 0, 10, 1e-4).is_err());
        assert!(kmeans_fit(&x, 0, 0, 10, 1e-4).is_err());
        let bad = FeatureMatrix::from_rows(&[vec![f32::NAN]]).unwrap();
        assert!(kmeans_fit(&bad, 1, 0, 10, 1e-4).is_err());
    }

    #[test]
    fn identical_points_do_not_break_seeding() {
        let x = FeatureMatrix::from_rows(&vec![vec![1.0f32, 1.0]; 10]).unwrap();
        let m = kmeans_fit(&x, 3, 0, 10, 1e-4).unwrap();
        assert_eq!(m.inertia, 0.0);
    }
}
