use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};

const UNSW_NB15: &str = include_str!("../../profiles/unsw-nb15.toml");
const CIC_IDS2017: &str = include_str!("../../profiles/cic-ids2017.toml");
const CIC_IDS2018: &str = include_str!("../../profiles/cic-ids2018.toml");
const SYNTHETIC: &str = include_str!("../../profiles/synthetic.toml");

/// Per-dataset cleaning rules: which column is the target, which raw class
/// names collapse into one merged class, and which columns are not features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetProfile {
    pub name: String,
    pub target_column: String,
    /// Class treated as the negative class when the task is binary.
    #[serde(default)]
    pub benign_label: Option<String>,
    /// Identifier / non-feature columns removed before cleaning.
    #[serde(default)]
    pub drop_columns: Vec<String>,
    #[serde(default)]
    pub expected_classes: Option<Vec<String>>,
    #[serde(default, rename = "merge")]
    pub merge_map: BTreeMap<String, String>,
}

impl DatasetProfile {
    /// Identity profile for a given target column.
    pub fn identity(name: &str, target_column: &str) -> Self {
        DatasetProfile {
            name: name.to_string(),
            target_column: target_column.to_string(),
            benign_label: None,
            drop_columns: Vec::new(),
            expected_classes: None,
            merge_map: BTreeMap::new(),
        }
    }

    pub fn bundled_names() -> &'static [&'static str] {
        &["unsw-nb15", "cic-ids2017", "cic-ids2018", "synthetic"]
    }

    pub fn bundled(name: &str) -> Option<Self> {
        let text = match name.to_ascii_lowercase().as_str() {
            "unsw-nb15" | "unsw" => UNSW_NB15,
            "cic-ids2017" | "cicids2017" => CIC_IDS2017,
            "cic-ids2018" | "cicids2018" => CIC_IDS2018,
            "synthetic" => SYNTHETIC,
            _ => return None,
        };
        Some(Self::parse(text).expect("bundled profile parses"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let p: DatasetProfile =
            toml::from_str(text).map_err(|e| IdsError::Config(format!("profile: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IdsError::io(path, e))?;
        Self::parse(&text)
    }

    /// A bundled profile name, or a path to a profile file.
    pub fn resolve(reference: &str) -> Result<Self> {
        if let Some(p) = Self::bundled(reference) {
            return Ok(p);
        }
        let path = Path::new(reference);
        if path.exists() {
            return Self::load(path);
        }
        Err(IdsError::Config(format!(
            "unknown dataset profile `{reference}` (bundled: {})",
            Self::bundled_names().join(", ")
        )))
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_column.trim().is_empty() {
            return Err(IdsError::Config("profile target_column is empty".into()));
        }
        for (from, to) in &self.merge_map {
            if let Some(next) = self.merge_map.get(to) {
                if next != to {
                    return Err(IdsError::Config(format!(
                        "merge map is not idempotent: `{from}` -> `{to}` -> `{next}`"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Merged class name for a raw (already trimmed) label.
    pub fn merge<'a>(&'a self, label: &'a str) -> &'a str {
        self.merge_map.get(label).map_or(label, String::as_str)
    }
}
