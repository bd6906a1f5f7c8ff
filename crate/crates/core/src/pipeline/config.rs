//! Run configuration, read from a TOML file and overridable from the
//! command line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::ingest::DatasetProfile;
use crate::models::gbt::GbtParams;
use crate::models::impurity::Criterion;
use crate::models::tree::MaxFeatures;
use crate::models::{ModelKind, ModelSpec};
use crate::sfe::{EmbedMode, SfeConfig};

/// Where transforms are fitted relative to the cross-validation split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakageMode {
    /// Scaler, oversampling, SFE and PCA are fitted once on all rows, and the
    /// folds are drawn from the oversampled data.
    #[default]
    Faithful,
    /// Everything is fitted per fold on training rows; test rows are never
    /// oversampled.
    Strict,
}

impl fmt::Display for LeakageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeakageMode::Faithful => "faithful",
            LeakageMode::Strict => "strict",
        })
    }
}

impl FromStr for LeakageMode {
    type Err = IdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "faithful" => Ok(LeakageMode::Faithful),
            "strict" => Ok(LeakageMode::Strict),
            _ => Err(IdsError::Config(format!(
                "unknown leakage mode `{s}` (expected faithful or strict)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub has_header: bool,
    /// Collapse every non-benign class into `Attack`.
    pub binary: bool,
    /// Stratified row sample taken after cleaning.
    pub sample_rows: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            has_header: true,
            binary: false,
            sample_rows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OversampleSection {
    pub enabled: bool,
}

impl Default for OversampleSection {
    fn default() -> Self {
        OversampleSection { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfeSection {
    pub enabled: bool,
    /// Unset means the number of classes.
    pub k_kmeans: Option<usize>,
    pub k_gmm: Option<usize>,
    pub embed_mode: EmbedMode,
    pub max_iter: usize,
    pub tol: f64,
    pub cov_floor: f64,
}

impl Default for SfeSection {
    fn default() -> Self {
        SfeSection {
            enabled: true,
            k_kmeans: None,
            k_gmm: None,
            embed_mode: EmbedMode::Hard,
            max_iter: 300,
            tol: 1e-4,
            cov_floor: 1e-6,
        }
    }
}

impl SfeSection {
    pub fn resolve(&self, n_classes: usize, seed: u64) -> SfeConfig {
        SfeConfig {
            k_kmeans: self.k_kmeans.unwrap_or(n_classes),
            k_gmm: self.k_gmm.unwrap_or(n_classes),
            embed_mode: self.embed_mode,
            seed,
            max_iter: self.max_iter,
            tol: self.tol,
            cov_floor: self.cov_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub enabled: bool,
    pub k: usize,
}

impl Default for PcaSection {
    fn default() -> Self {
        PcaSection { enabled: true, k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSection {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
}

impl Default for GbtSection {
    fn default() -> Self {
        let p = GbtParams::default();
        GbtSection {
            n_rounds: p.n_rounds,
            learning_rate: p.learning_rate,
            gamma: p.gamma,
            lambda: p.lambda,
            max_depth: p.max_depth,
            min_child_weight: p.min_child_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// One of dt, rf, et, gbt; `eval` also accepts a comma list or `all`.
    pub kind: String,
    pub n_trees: usize,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// all, sqrt, log2 or a fraction; unset means all for dt, sqrt otherwise.
    pub max_features: Option<String>,
    pub gbt: GbtSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "rf".into(),
            n_trees: 100,
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            gbt: GbtSection::default(),
        }
    }
}

impl ModelSection {
    pub fn kinds(&self) -> Result<Vec<ModelKind>> {
        let s = self.kind.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(ModelKind::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let k: ModelKind = part.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(IdsError::Config("model.kind is empty".into()));
        }
        Ok(out)
    }

    pub fn spec(&self, kind: ModelKind) -> Result<ModelSpec> {
        let max_features = self
            .max_features
            .as_deref()
            .map(str::parse::<MaxFeatures>)
            .transpose()?;
        let g = &self.gbt;
        let spec = ModelSpec {
            kind,
            n_trees: self.n_trees,
            criterion: self.criterion,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features,
            gbt: GbtParams {
                n_rounds: g.n_rounds,
                learning_rate: g.learning_rate,
                gamma: g.gamma,
                lambda: g.lambda,
                max_depth: g.max_depth,
                min_child_weight: g.min_child_weight,
                seed: 0,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub k: usize,
    pub stratified: bool,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            k: 10,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Bundled profile name or path to a profile file.
    pub profile: String,
    pub seed: u64,
    pub leakage: LeakageMode,
    pub data: DataSection,
    pub oversample: OversampleSection,
    pub sfe: SfeSection,
    pub pca: PcaSection,
    pub model: ModelSection,
    pub cv: CvSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            profile: "synthetic".into(),
            seed: 42,
            leakage: LeakageMode::Faithful,
            data: DataSection::default(),
            oversample: OversampleSection::default(),
            sfe: SfeSection::default(),
            pca: PcaSection::default(),
            model: ModelSection::default(),
            cv: CvSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: PipelineConfig =
            toml::from_str(text).map_err(|e| IdsError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IdsError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            IdsError::Config(m) => IdsError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cv.k < 2 {
            return Err(IdsError::Config("cv.k must be at least 2".into()));
        }
        if self.pca.enabled && self.pca.k == 0 {
            return Err(IdsError::Config("pca.k must be at least 1".into()));
        }
        if self.sfe.k_kmeans == Some(0) || self.sfe.k_gmm == Some(0) {
            return Err(IdsError::Config("sfe cluster counts must be at least 1".into()));
        }
        if !(self.sfe.tol > 0.0) || !(self.sfe.cov_floor > 0.0) {
            return Err(IdsError::Config("sfe.tol and sfe.cov_floor must be positive".into()));
        }
        if self.data.sample_rows == Some(0) {
            return Err(IdsError::Config("data.sample_rows must be positive".into()));
        }
        for k in self.model.kinds()? {
            self.model.spec(k)?;
        }
        self.profile()?;
        Ok(())
    }

    pub fn profile(&self) -> Result<DatasetProfile> {
        DatasetProfile::resolve(&self.profile)
    }

    /// The single model kind `train` fits.
    pub fn single_model(&self) -> Result<ModelSpec> {
        let kinds = self.model.kinds()?;
        if kinds.len() != 1 {
            return Err(IdsError::Config(format!(
                "training needs exactly one model kind, got `{}`",
                self.model.kind
            )));
        }
        self.model.spec(kinds[0])
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        self.model.kinds()?.into_iter().map(|k| self.model.spec(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn dotted_sections() {
        let c = PipelineConfig::parse(
            "profile = \"unsw-nb15\"\nseed = 7\nleakage = \"strict\"\n\
             sfe.embed_mode = \"soft\"\npca.k = 5\nmodel.kind = \"gbt\"\nmodel.gbt.n_rounds = 3\n",
        )
        .unwrap();
        assert_eq!(c.leakage, LeakageMode::Strict);
        assert_eq!(c.sfe.embed_mode, EmbedMode::Soft);
        assert_eq!(c.pca.k, 5);
        assert_eq!(c.single_model().unwrap().gbt.n_rounds, 3);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::parse("cv.k = 1").is_err());
        assert!(PipelineConfig::parse("model.kind = \"svm\"").is_err());
        assert!(PipelineConfig::parse("profile = \"no-such-profile\"").is_err());
        assert!(PipelineConfig::parse("bogus = 1").is_err());
        assert!(PipelineConfig::parse("model.max_features = \"most\"").is_err());
    }

    #[test]
    fn model_lists() {
        let mut c = PipelineConfig::default();
        c.model.kind = "all".into();
        assert_eq!(c.model.kinds().unwrap().len(), 4);
        assert!(c.single_model().is_err());
        c.model.kind = "dt, et".into();
        assert_eq!(c.model.kinds().unwrap(), vec![ModelKind::Dt, ModelKind::Et]);
    }
}
