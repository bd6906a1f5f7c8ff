//! Z-score scaling and label encoding.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::ingest::class_histogram;
use crate::matrix::{check_width, FeatureMatrix};

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Column means and population (divide-by-n) standard deviations.
pub fn fit_scaler(x: &FeatureMatrix) -> Result<ScalerParams> {
    if x.is_empty() {
        return Err(IdsError::Empty("cannot fit scaler on zero rows".into()));
    }
    let n = x.rows() as f64;
    let d = x.cols();
    let mut means = vec![0.0f64; d];
    for row in x.iter_rows() {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    // second pass on centered values; avoids cancellation in E[x²] − E[x]²
    let mut var = vec![0.0f64; d];
    for row in x.iter_rows() {
        for ((s, &v), m) in var.iter_mut().zip(row).zip(&means) {
            let c = f64::from(v) - m;
            *s += c * c;
        }
    }
    let stds = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(ScalerParams { means, stds })
}

/// `(x − μ) / σ` per column; columns with σ = 0 map to zero.
pub fn apply_scaler(p: &ScalerParams, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    check_width(p.dim(), x.cols())?;
    let mut out = x.clone();
    let d = x.cols();
    if d > 0 {
        out.as_mut_slice()
            .par_chunks_mut(d)
            .for_each(|row| scale_row(p, row));
    }
    Ok(out)
}

fn scale_row(p: &ScalerParams, row: &mut [f32]) {
    for ((v, m), s) in row.iter_mut().zip(&p.means).zip(&p.stds) {
        *v = if *s > 0.0 {
            ((f64::from(*v) - m) / s) as f32
        } else {
            0.0
        };
    }
}

/// Bijection between class names and codes `0..C`.
///
/// Codes follow descending training frequency, ties broken by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapRepr", into = "LabelMapRepr")]
pub struct LabelMap {
    code_to_class: Vec<String>,
    class_to_code: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct LabelMapRepr {
    classes: Vec<String>,
}

impl TryFrom<LabelMapRepr> for LabelMap {
    type Error = IdsError;
    fn try_from(r: LabelMapRepr) -> Result<Self> {
        LabelMap::from_classes(r.classes)
    }
}

impl From<LabelMap> for LabelMapRepr {
    fn from(m: LabelMap) -> Self {
        LabelMapRepr {
            classes: m.code_to_class,
        }
    }
}

impl LabelMap {
    pub fn from_classes(code_to_class: Vec<String>) -> Result<Self> {
        let class_to_code: BTreeMap<String, usize> = code_to_class
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        if class_to_code.len() != code_to_class.len() {
            return Err(IdsError::InvalidArgument("duplicate class names in label map".into()));
        }
        Ok(LabelMap {
            code_to_class,
            class_to_code,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.code_to_class.len()
    }

    pub fn code(&self, class: &str) -> Option<usize> {
        self.class_to_code.get(class).copied()
    }

    pub fn class(&self, code: usize) -> Option<&str> {
        self.code_to_class.get(code).map(String::as_str)
    }

    pub fn classes(&self) -> &[String] {
        &self.code_to_class
    }
}

pub fn fit_label_encoder<S: AsRef<str>>(labels: &[S]) -> Result<LabelMap> {
    if labels.is_empty() {
        return Err(IdsError::Empty("cannot fit label encoder on zero labels".into()));
    }
    LabelMap::from_classes(class_histogram(labels).into_iter().map(|(c, _)| c).collect())
}

pub fn encode_labels<S: AsRef<str>>(m: &LabelMap, labels: &[S]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            m.code(l.as_ref())
                .ok_or_else(|| IdsError::UnseenLabel(l.as_ref().to_string()))
        })
        .collect()
}

pub fn decode_labels(m: &LabelMap, codes: &[usize]) -> Result<Vec<String>> {
    codes
        .iter()
        .map(|&c| {
            m.class(c).map(str::to_string).ok_or(IdsError::CodeOutOfRange {
                code: c,
                classes: m.n_classes(),
            })
        })
        .collect()
}
