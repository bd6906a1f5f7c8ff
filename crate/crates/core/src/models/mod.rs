//! Tree-based classifiers and the versioned model file.

pub mod forest;
pub mod gbt;
pub mod impurity;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::{FeatureMatrix, RealMatrix};
use forest::{et_fit, forest_predict, forest_predict_proba, rf_fit, ForestModel};
use gbt::{gbt_fit, gbt_predict, gbt_predict_proba, GbtModel, GbtParams};
use impurity::Criterion;
use tree::{dt_fit, tree_predict, tree_predict_proba, MaxFeatures, Tree, TreeParams};

pub const MODEL_FORMAT: &str = "ids-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Rf,
    Et,
    Gbt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dt, ModelKind::Rf, ModelKind::Et, ModelKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Et => "et",
            ModelKind::Gbt => "gbt",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Dt => "DT",
            ModelKind::Rf => "RF",
            ModelKind::Et => "ET",
            ModelKind::Gbt => "XGB",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = IdsError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ModelKind::Dt),
            "rf" => Ok(ModelKind::Rf),
            "et" => Ok(ModelKind::Et),
            "gbt" | "xgb" => Ok(ModelKind::Gbt),
            _ => Err(IdsError::Config(format!(
                "unknown model `{s}` (expected dt, rf, et or gbt)"
            ))),
        }
    }
}

/// Model choice plus hyperparameters. Fields that do not apply to the
/// chosen kind are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n_trees: usize,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// `None` means all features for a single tree and sqrt for ensembles.
    pub max_features: Option<MaxFeatures>,
    pub gbt: GbtParams,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            n_trees: 100,
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            gbt: GbtParams::default(),
        }
    }

    pub fn tree_params(&self, seed: u64) -> TreeParams {
        let default_mf = match self.kind {
            ModelKind::Dt => MaxFeatures::All,
            _ => MaxFeatures::Sqrt,
        };
        TreeParams {
            criterion: self.criterion,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features.unwrap_or(default_mf),
            seed,
            ..TreeParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tree_params(0).validate()?;
        self.gbt.validate()?;
        if matches!(self.kind, ModelKind::Rf | ModelKind::Et) && self.n_trees == 0 {
            return Err(IdsError::Config("n_trees must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fit(
        &self,
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<TrainedModel> {
        self.validate()?;
        let tp = self.tree_params(seed);
        Ok(match self.kind {
            ModelKind::Dt => TrainedModel::Dt(dt_fit(x, y, n_classes, &tp)?),
            ModelKind::Rf => TrainedModel::Rf(rf_fit(x, y, n_classes, self.n_trees, &tp, seed)?),
            ModelKind::Et => TrainedModel::Et(et_fit(x, y, n_classes, self.n_trees, &tp, seed)?),
            ModelKind::Gbt => {
                let p = GbtParams {
                    seed,
                    ..self.gbt.clone()
                };
                TrainedModel::Gbt(gbt_fit(x, y, n_classes, &p)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    Dt(Tree),
    Rf(ForestModel),
    Et(ForestModel),
    Gbt(GbtModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Dt(_) => ModelKind::Dt,
            TrainedModel::Rf(_) => ModelKind::Rf,
            TrainedModel::Et(_) => ModelKind::Et,
            TrainedModel::Gbt(_) => ModelKind::Gbt,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Dt(t) => t.n_features,
            TrainedModel::Rf(m) | TrainedModel::Et(m) => m.n_features,
            TrainedModel::Gbt(m) => m.n_features,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Dt(t) => t.n_classes,
            TrainedModel::Rf(m) | TrainedModel::Et(m) => m.n_classes,
            TrainedModel::Gbt(m) => m.n_classes,
        }
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<RealMatrix> {
        match self {
            TrainedModel::Dt(t) => tree_predict_proba(t, x),
            TrainedModel::Rf(m) | TrainedModel::Et(m) => forest_predict_proba(m, x),
            TrainedModel::Gbt(m) => gbt_predict_proba(m, x),
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        match self {
            TrainedModel::Dt(t) => tree_predict(t, x),
            TrainedModel::Rf(m) | TrainedModel::Et(m) => forest_predict(m, x),
            TrainedModel::Gbt(m) => gbt_predict(m, x),
        }
    }
}

/// On-disk model: format tag, schema version, class names by code, model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub classes: Vec<String>,
    #[serde(flatten)]
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn new(classes: Vec<String>, model: TrainedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            classes,
            model,
        }
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
        if h.format != MODEL_FORMAT || h.version != MODEL_VERSION {
            return Err(IdsError::Format {
                kind: "model",
                detail: format!(
                    "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                    h.format, h.version
                ),
            });
        }
        let f: ModelFile = serde_json::from_str(text)?;
        if f.classes.len() != f.model.n_classes() {
            return Err(IdsError::Format {
                kind: "model",
                detail: "class list does not match the model's class count".into(),
            });
        }
        Ok(f)
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

    fn data() -> (FeatureMatrix, Vec<usize>) {
        let rows: Vec<Vec<f32>> = (0..40)
            .map(|i| vec![i as f32, ((i * 7) % 11) as f32])
            .collect();
        let y = (0..40).map(|i| usize::from(i >= 20)).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn every_kind_fits_and_round_trips() {
        let (x, y) = data();
        for kind in ModelKind::ALL {
            let mut spec = ModelSpec::new(kind);
            spec.n_trees = 5;
            spec.gbt.n_rounds = 5;
            let m = spec.fit(&x, &y, 2, 9).unwrap();
            assert_eq!(m.kind(), kind);
            assert_eq!(m.predict(&x).unwrap(), y, "{kind}");
            let file = ModelFile::new(vec!["a".into(), "b".into()], m);
            let text = file.to_json().unwrap();
            let back = ModelFile::from_json(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let (x, y) = data();
        let m = ModelSpec::new(ModelKind::Dt).fit(&x, &y, 2, 0).unwrap();
        let text = ModelFile::new(vec!["a".into(), "b".into()], m)
            .to_json()
            .unwrap()
            .replace("\"version\":1", "\"version\":7");
        assert!(matches!(
            ModelFile::from_json(&text),
            Err(IdsError::Format { kind: "model", .. })
        ));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RF".parse::<ModelKind>().unwrap(), ModelKind::Rf);
        assert_eq!("xgb".parse::<ModelKind>().unwrap(), ModelKind::Gbt);
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
