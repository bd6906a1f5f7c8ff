//! The fitted transform chain: scaler, optional cluster embedding, optional
//! PCA, frozen after fit and stored as one versioned file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{IdsError, Result};
use crate::ingest::CleanTable;
use crate::matrix::{check_width, FeatureMatrix};
use crate::pca::{pca_fit, pca_transform, PcaModel};
use crate::resample::{random_oversample, ResamplePlan};
use crate::sfe::{sfe_embed, sfe_fit, SfeConfig, SfeModel};
use crate::transform::{apply_scaler, fit_scaler, LabelMap, ScalerParams};

pub const CHAIN_FORMAT: &str = "ids-chain";
pub const CHAIN_VERSION: u32 = 1;

/// Which transforms run, already resolved against the class count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub oversample: bool,
    pub sfe: Option<SfeConfig>,
    pub pca_k: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformStages {
    pub scaler: ScalerParams,
    pub sfe: Option<SfeModel>,
    pub pca: Option<PcaModel>,
}

impl TransformStages {
    pub fn input_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn output_dim(&self) -> usize {
        match (&self.pca, &self.sfe) {
            (Some(p), _) => p.k_out(),
            (None, Some(s)) => s.output_dim(),
            (None, None) => self.scaler.dim(),
        }
    }

    pub fn stage_names(&self) -> Vec<&'static str> {
        let mut v = vec!["scaler"];
        if self.sfe.is_some() {
            v.push("sfe");
        }
        if self.pca.is_some() {
            v.push("pca");
        }
        v
    }

    /// Each stage's output width must be the next stage's input width.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.scaler.dim();
        if let Some(s) = &self.sfe {
            if s.input_dim() != width {
                return Err(IdsError::Invariant(format!(
                    "sfe expects {} columns but the scaler yields {width}",
                    s.input_dim()
                )));
            }
            width = s.output_dim();
        }
        if let Some(p) = &self.pca {
            if p.d_in() != width {
                return Err(IdsError::Invariant(format!(
                    "pca expects {} columns but the previous stage yields {width}",
                    p.d_in()
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let mut z = apply_scaler(&self.scaler, x)?;
        if let Some(s) = &self.sfe {
            z = sfe_embed(s, &z)?;
        }
        if let Some(p) = &self.pca {
            z = pca_transform(p, &z)?;
        }
        Ok(z)
    }
}

/// Output of fitting the transforms on a training set.
#[derive(Debug, Clone)]
pub struct FittedTransforms {
    pub stages: TransformStages,
    /// Transformed training rows, oversampled when enabled.
    pub x: FeatureMatrix,
    pub y: Vec<usize>,
    pub plan: Option<ResamplePlan>,
}

/// Standardize, oversample, embed, reduce, in that order. Each stage is
/// fitted on the output of the previous one.
pub fn fit_transforms(x: &FeatureMatrix, y: &[usize], spec: &TransformSpec) -> Result<FittedTransforms> {
    let scaler = fit_scaler(x)?;
    let mut z = apply_scaler(&scaler, x)?;
    let mut y = y.to_vec();
    let mut plan = None;
    if spec.oversample {
        let (zo, yo, p) = random_oversample(&z, &y, spec.seed)?;
        z = zo;
        y = yo;
        plan = Some(p);
    }
    let sfe = match &spec.sfe {
        Some(cfg) => {
            let cfg = SfeConfig {
                seed: spec.seed,
                ..cfg.clone()
            };
            let m = sfe_fit(&z, &cfg)?;
            z = sfe_embed(&m, &z)?;
            Some(m)
        }
        None => None,
    };
    let pca = match spec.pca_k {
        Some(k) => {
            let m = pca_fit(&z, k)?;
            z = pca_transform(&m, &z)?;
            Some(m)
        }
        None => None,
    };
    Ok(FittedTransforms {
        stages: TransformStages { scaler, sfe, pca },
        x: z,
        y,
        plan,
    })
}

/// Identity of the training data a chain was fitted on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub rows: usize,
    /// Feature columns, in the order the chain consumes them.
    pub columns: Vec<String>,
    pub label_column: String,
    /// Input columns that are not features and may be present at predict time.
    pub ignored_columns: Vec<String>,
    /// SHA-256 over column names, feature bits and labels.
    pub sha256: String,
}

impl Fingerprint {
    pub fn of(table: &CleanTable, ignored_columns: Vec<String>) -> Self {
        let mut h = Sha256::new();
        for name in table.column_names() {
            h.update(name.as_bytes());
            h.update([0x1f]);
        }
        for row in table.features.iter_rows() {
            for v in row {
                h.update(v.to_le_bytes());
            }
        }
        for l in &table.labels {
            h.update(l.as_bytes());
            h.update([0x1e]);
        }
        Fingerprint {
            rows: table.row_count(),
            columns: table.feature_names.clone(),
            label_column: table.label_name.clone(),
            ignored_columns,
            sha256: hex::encode(h.finalize()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransformChain {
    pub format: String,
    pub version: u32,
    pub fingerprint: Fingerprint,
    pub label_map: LabelMap,
    pub stages: Vec<String>,
    #[serde(flatten)]
    pub transforms: TransformStages,
}

impl FittedTransformChain {
    pub fn new(fingerprint: Fingerprint, label_map: LabelMap, transforms: TransformStages) -> Self {
        FittedTransformChain {
            format: CHAIN_FORMAT.into(),
            version: CHAIN_VERSION,
            fingerprint,
            label_map,
            stages: transforms.stage_names().iter().map(|s| s.to_string()).collect(),
            transforms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHAIN_FORMAT || self.version != CHAIN_VERSION {
            return Err(IdsError::Format {
                kind: "chain",
                detail: format!(
                    "expected {CHAIN_FORMAT} v{CHAIN_VERSION}, found {} v{}",
                    self.format, self.version
                ),
            });
        }
        check_width(self.fingerprint.columns.len(), self.transforms.input_dim())?;
        self.transforms.validate()?;
        let names: Vec<String> = self
            .transforms
            .stage_names()
            .iter()
            .map(|s| s.to_string())
            .collect();
        if names != self.stages {
            return Err(IdsError::Format {
                kind: "chain",
                detail: format!("stage list {:?} does not match stored stages", self.stages),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.transforms.apply(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text)?;
        if h.format != CHAIN_FORMAT || h.version != CHAIN_VERSION {
            return Err(IdsError::Format {
                kind: "chain",
                detail: format!(
                    "expected {CHAIN_FORMAT} v{CHAIN_VERSION}, found {} v{}",
                    h.format, h.version
                ),
            });
        }
        let c: FittedTransformChain = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| IdsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IdsError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfe::EmbedMode;

    fn data() -> (FeatureMatrix, Vec<usize>) {
        let rows: Vec<Vec<f32>> = (0..30)
            .map(|i| {
                let c = (i % 3) as f32;
                vec![c * 4.0 + (i as f32 * 0.37).sin(), c - (i as f32 * 0.11).cos(), (i % 5) as f32]
            })
            .collect();
        let y = (0..30).map(|i| usize::from(i % 3 == 0)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn widths_compose() {
        let (x, y) = data();
        let mut sfe = SfeConfig::with_k(2, 0);
        sfe.embed_mode = EmbedMode::Soft;
        let spec = TransformSpec {
            oversample: true,
            sfe: Some(sfe),
            pca_k: Some(2),
            seed: 5,
        };
        let f = fit_transforms(&x, &y, &spec).unwrap();
        assert_eq!(f.stages.stage_names(), vec!["scaler", "sfe", "pca"]);
        assert_eq!(f.stages.sfe.as_ref().unwrap().output_dim(), 7);
        assert_eq!(f.x.cols(), 2);
        assert_eq!(f.x.rows(), 40);
        f.stages.validate().unwrap();
        // applying to the original rows reproduces the first n transformed rows
        let again = f.stages.apply(&x).unwrap();
        assert_eq!(again.as_slice(), &f.x.as_slice()[..30 * 2]);
    }

    #[test]
    fn scaler_only() {
        let (x, y) = data();
        let spec = TransformSpec {
            oversample: false,
            sfe: None,
            pca_k: None,
            seed: 0,
        };
        let f = fit_transforms(&x, &y, &spec).unwrap();
        assert_eq!(f.stages.stage_names(), vec!["scaler"]);
        assert_eq!(f.x.cols(), 3);
        assert!(f.plan.is_none());
    }
}
