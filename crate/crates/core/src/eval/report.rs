use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::cv::{LeakageAudit, ModelReport, TransformSummary};
use crate::pipeline::config::LeakageMode;
use crate::sfe::SfeConfig;

pub const REPORT_FORMAT: &str = "ids-eval-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_profile: String,
    /// Fingerprint of the evaluated table.
    pub input_sha256: String,
    pub seed: u64,
    pub leakage_mode: LeakageMode,
    pub cv_k: usize,
    pub stratified: bool,
    pub binary: bool,
    pub sample_rows: Option<usize>,
    pub n_rows: usize,
    pub n_features: usize,
    /// Class names by code.
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
    pub oversample: bool,
    pub sfe: Option<SfeConfig>,
    pub pca_k: Option<usize>,
    /// Fixed conventions in effect, recorded for readers of the report.
    pub conventions: BTreeMap<String, String>,
}

/// Byte-deterministic for equal inputs; wall-clock timings are written to a
/// separate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub format: String,
    pub version: u32,
    pub metadata: ReportMetadata,
    pub transforms: TransformSummary,
    pub fold_sizes: Vec<usize>,
    pub audit: LeakageAudit,
    pub models: Vec<ModelReport>,
}

impl EvaluationReport {
    pub fn model(&self, kind: crate::models::ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == kind)
    }
}

pub fn conventions() -> BTreeMap<String, String> {
    [
        ("scaler_std", "population (divide by n); zero-variance columns map to 0"),
        ("label_codes", "descending training frequency, ties lexicographic"),
        ("oversample_target", "majority class count for every class"),
        ("sfe_meta_features", "standardized before concatenation"),
        ("pca_scaling", "unit variance per feature; covariance divisor n"),
        ("split_thresholds", "midpoints of consecutive distinct values"),
        ("tie_break", "lowest index, then lowest threshold"),
        ("zero_division", "precision or recall reported as 0"),
        ("macro_average", "classes present as actual or predicted labels"),
        ("binary_auc", "class code 1 is the positive class"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Percentages per model: accuracy, weighted precision/recall/F1, macro F1
/// and AUC.
pub fn summary_table(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let m = &report.metadata;
    let _ = writeln!(
        s,
        "{} | {}-fold{} | leakage={} | rows={} | classes={}",
        m.dataset_profile,
        m.cv_k,
        if m.stratified { " stratified" } else { "" },
        match m.leakage_mode {
            LeakageMode::Faithful => "faithful",
            LeakageMode::Strict => "strict",
        },
        report.audit.rows_evaluated,
        m.classes.len(),
    );
    let _ = writeln!(
        s,
        "{:<6} {:>9} {:>10} {:>8} {:>9} {:>9} {:>8}",
        "Model", "Accuracy", "Precision", "Recall", "F1-score", "Macro-F1", "AUC"
    );
    for r in &report.models {
        let a = &r.aggregate;
        let _ = writeln!(
            s,
            "{:<6} {:>9.2} {:>10.2} {:>8.2} {:>9.2} {:>9.2} {:>8.4}",
            r.model.display_name(),
            100.0 * a.accuracy,
            100.0 * a.weighted.precision,
            100.0 * a.weighted.recall,
            100.0 * a.weighted.f1,
            100.0 * a.macro_avg.f1,
            a.auc,
        );
    }
    s
}
