//! Stacking feature embedding: cluster the data with k-means and a Gaussian
//! mixture, then append the clusterers' outputs to the original columns as
//! meta-features.

mod gmm;
mod kmeans;

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::{argmax, check_width, FeatureMatrix, RealMatrix};
use crate::transform::{apply_scaler, fit_scaler, ScalerParams};

pub use gmm::{gmm_fit, gmm_predict, gmm_responsibilities, GmmModel};
pub use kmeans::{kmeans_assign, kmeans_fit, KMeansModel};

/// Which clusterer outputs become columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    /// One column per clusterer holding the cluster index.
    Hard,
    /// Negated centroid distances plus mixture responsibilities.
    Soft,
    Both,
}

impl std::str::FromStr for EmbedMode {
    type Err = IdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(EmbedMode::Hard),
            "soft" => Ok(EmbedMode::Soft),
            "both" => Ok(EmbedMode::Both),
            other => Err(IdsError::Config(format!("unknown embed mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfeConfig {
    pub k_kmeans: usize,
    pub k_gmm: usize,
    pub embed_mode: EmbedMode,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub cov_floor: f64,
}

impl SfeConfig {
    /// Both clusterers use `k` components; iteration limits as documented defaults.
    pub fn with_k(k: usize, seed: u64) -> Self {
        SfeConfig {
            k_kmeans: k,
            k_gmm: k,
            embed_mode: EmbedMode::Hard,
            seed,
            max_iter: 300,
            tol: 1e-4,
            cov_floor: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_kmeans == 0 || self.k_gmm == 0 {
            return Err(IdsError::Config("sfe cluster counts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(IdsError::Config("sfe tol must be positive".into()));
        }
        Ok(())
    }

    /// Number of columns `sfe_embed` appends.
    pub fn added_columns(&self) -> usize {
        added_columns(self.embed_mode, self.k_kmeans, self.k_gmm)
    }
}

fn added_columns(mode: EmbedMode, kk: usize, kg: usize) -> usize {
    match mode {
        EmbedMode::Hard => 2,
        EmbedMode::Soft => kk + kg,
        EmbedMode::Both => 2 + kk + kg,
    }
}

/// Both clusterers plus the scaler standardising their meta-features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfeModel {
    pub kmeans: KMeansModel,
    pub gmm: GmmModel,
    pub embed_mode: EmbedMode,
    pub meta_scaler: ScalerParams,
}

impl SfeModel {
    pub fn input_dim(&self) -> usize {
        self.kmeans.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim() + added_columns(self.embed_mode, self.kmeans.k(), self.gmm.k())
    }
}

pub fn sfe_fit(x: &FeatureMatrix, cfg: &SfeConfig) -> Result<SfeModel> {
    cfg.validate()?;
    let kmeans = kmeans_fit(x, cfg.k_kmeans, cfg.seed, cfg.max_iter, cfg.tol)?;
    let gmm = gmm_fit(x, cfg.k_gmm, cfg.seed, cfg.max_iter, cfg.tol, cfg.cov_floor)?;
    let meta = raw_meta(&kmeans, &gmm, cfg.embed_mode, x)?;
    let meta_scaler = fit_scaler(&meta)?;
    Ok(SfeModel {
        kmeans,
        gmm,
        embed_mode: cfg.embed_mode,
        meta_scaler,
    })
}

/// Unstandardised meta-feature block in column order: hard labels
/// (k-means, mixture), then k-means negated distances, then responsibilities.
fn raw_meta(
    km: &KMeansModel,
    gm: &GmmModel,
    mode: EmbedMode,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix> {
    let (km_labels, dist) = kmeans_assign(km, x)?;
    let resp = gmm_responsibilities(gm, x)?;
    let width = added_columns(mode, km.k(), gm.k());
    let mut out = RealMatrix::zeros(x.rows(), width);
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mut j = 0;
        if matches!(mode, EmbedMode::Hard | EmbedMode::Both) {
            row[0] = km_labels[i] as f64;
            row[1] = argmax(resp.row(i)) as f64;
            j = 2;
        }
        if matches!(mode, EmbedMode::Soft | EmbedMode::Both) {
            for &v in dist.row(i) {
                row[j] = -v;
                j += 1;
            }
            for &v in resp.row(i) {
                row[j] = v;
                j += 1;
            }
        }
    }
    Ok(out.to_f32())
}

/// `x` with the standardised meta-features appended; columns `0..d` are `x` verbatim.
pub fn sfe_embed(m: &SfeModel, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    check_width(m.input_dim(), x.cols())?;
    let meta = raw_meta(&m.kmeans, &m.gmm, m.embed_mode, x)?;
    x.hstack(&apply_scaler(&m.meta_scaler, &meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FeatureMatrix {
        let mut rows = Vec::new();
        for i in 0..30 {
            let c = (i % 3) as f32 * 10.0;
            rows.push(vec![c + (i as f32) * 0.01, c - (i as f32) * 0.02]);
        }
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn widths_per_mode() {
        let x = grid();
        let mut cfg = SfeConfig::with_k(3, 1);
        let m = sfe_fit(&x, &cfg).unwrap();
        assert_eq!(sfe_embed(&m, &x).unwrap().cols(), 4);

        cfg.embed_mode = EmbedMode::Soft;
        cfg.k_kmeans = 2;
        cfg.k_gmm = 3;
        let m = sfe_fit(&x, &cfg).unwrap();
        assert_eq!(sfe_embed(&m, &x).unwrap().cols(), 2 + 5);
        assert_eq!(m.output_dim(), 7);

        cfg.embed_mode = EmbedMode::Both;
        let m = sfe_fit(&x, &cfg).unwrap();
        assert_eq!(sfe_embed(&m, &x).unwrap().cols(), 2 + 7);
    }

    #[test]
    fn originals_preserved_and_duplicates_agree() {
        let mut x = grid();
        x.push_row(&x.row(4).to_vec()).unwrap();
        let m = sfe_fit(&x, &SfeConfig::with_k(3, 2)).unwrap();
        let e = sfe_embed(&m, &x).unwrap();
        for i in 0..x.rows() {
            assert_eq!(&e.row(i)[..2], x.row(i));
        }
        assert_eq!(e.row(4), e.row(x.rows() - 1));
    }

    #[test]
    fn meta_columns_are_standardised() {
        let x = grid();
        let mut cfg = SfeConfig::with_k(3, 3);
        cfg.embed_mode = EmbedMode::Both;
        let m = sfe_fit(&x, &cfg).unwrap();
        let e = sfe_embed(&m, &x).unwrap();
        let meta = FeatureMatrix::from_rows(
            &e.iter_rows().map(|r| r[2..].to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        let p = fit_scaler(&meta).unwrap();
        for (mu, sd) in p.means.iter().zip(&p.stds) {
            assert!(mu.abs() < 1e-5);
            assert!(*sd == 0.0 || (sd - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let x = grid();
        let m = sfe_fit(&x, &SfeConfig::with_k(2, 0)).unwrap();
        assert!(sfe_embed(&m, &FeatureMatrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("SOFT".parse::<EmbedMode>().unwrap(), EmbedMode::Soft);
        assert!("fuzzy".parse::<EmbedMode>().is_err());
    }
}
