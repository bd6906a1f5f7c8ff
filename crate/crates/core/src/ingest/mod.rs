//! CSV loading and the cleaning rules applied before anything is fitted.
//!
//! Cleaning drops rows carrying missing or infinite values, trims column
//! names, rewrites labels through the profile's merge map, downcasts every
//! numeric value to `f32`, and finally removes exact duplicate rows keeping
//! the first occurrence.

mod profile;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::{self, Domain};

pub use profile::DatasetProfile;

/// One parsed CSV column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// Every present value parsed as a 64-bit integer.
    Integer(Vec<Option<i64>>),
    /// Reals; missing cells are NaN.
    Numeric(Vec<f64>),
    Text(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Integer(v) => v.len(),
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Column::Text(_))
    }

    /// Value as `f64`; `None` for missing or text cells.
    pub fn real(&self, i: usize) -> Option<f64> {
        match self {
            Column::Integer(v) => v[i].map(|x| x as f64),
            Column::Numeric(v) => Some(v[i]).filter(|x| !x.is_nan()),
            Column::Text(_) => None,
        }
    }

    fn text(&self, i: usize) -> Option<String> {
        match self {
            Column::Integer(v) => v[i].map(|x| x.to_string()),
            Column::Numeric(v) => Some(v[i]).filter(|x| !x.is_nan()).map(|x| x.to_string()),
            Column::Text(v) => v[i].clone(),
        }
    }
}

/// A CSV as loaded, before any cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub columns: Vec<Column>,
    pub row_count: usize,
}

impl RawTable {
    pub fn new(column_names: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(IdsError::DimensionMismatch {
                expected: column_names.len(),
                found: columns.len(),
            });
        }
        let row_count = columns.first().map_or(0, Column::len);
        if let Some(c) = columns.iter().find(|c| c.len() != row_count) {
            return Err(IdsError::DimensionMismatch {
                expected: row_count,
                found: c.len(),
            });
        }
        Ok(RawTable {
            column_names: unique_names(column_names),
            columns,
            row_count,
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.column_names.iter().position(|c| c.trim() == name)
    }
}

/// Trimmed names are made unique by suffixing `.1`, `.2`, ... to repeats.
fn unique_names(names: Vec<String>) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    names
        .into_iter()
        .map(|n| {
            let base = n.trim().to_string();
            if seen.insert(base.clone()) {
                return n;
            }
            let mut k = 1;
            loop {
                let candidate = format!("{base}.{k}");
                if seen.insert(candidate.clone()) {
                    return candidate;
                }
                k += 1;
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Missing,
    Int(i64),
    Real(f64),
    Text,
}

fn parse_cell(raw: &str) -> Cell {
    let s = raw.trim();
    if s.is_empty() {
        return Cell::Missing;
    }
    match s.to_ascii_lowercase().as_str() {
        "nan" | "-nan" | "null" | "na" => return Cell::Real(f64::NAN),
        "inf" | "+inf" | "infinity" | "+infinity" => return Cell::Real(f64::INFINITY),
        "-inf" | "-infinity" => return Cell::Real(f64::NEG_INFINITY),
        _ => {}
    }
    if let Ok(v) = s.parse::<i64>() {
        return Cell::Int(v);
    }
    match s.parse::<f64>() {
        Ok(v) => Cell::Real(v),
        Err(_) => Cell::Text,
    }
}

/// Column builder that stays numeric for as long as the values allow.
enum Builder {
    Integer(Vec<Option<i64>>),
    Numeric(Vec<f64>),
    Text(Vec<Option<String>>),
}

impl Builder {
    fn push(&mut self, raw: &str) {
        let cell = parse_cell(raw);
        loop {
            match (&mut *self, cell) {
                (Builder::Integer(v), Cell::Missing) => v.push(None),
                (Builder::Integer(v), Cell::Int(x)) => v.push(Some(x)),
                (Builder::Integer(v), Cell::Real(_)) => {
                    let promoted = v.iter().map(|x| x.map_or(f64::NAN, |x| x as f64)).collect();
                    *self = Builder::Numeric(promoted);
                    continue;
                }
                (Builder::Numeric(v), Cell::Missing) => v.push(f64::NAN),
                (Builder::Numeric(v), Cell::Int(x)) => v.push(x as f64),
                (Builder::Numeric(v), Cell::Real(x)) => v.push(x),
                (Builder::Integer(_) | Builder::Numeric(_), Cell::Text) => {
                    *self = Builder::Text(self.as_text());
                    continue;
                }
                (Builder::Text(v), Cell::Missing) => v.push(None),
                (Builder::Text(v), _) => v.push(Some(raw.trim().to_string())),
            }
            break;
        }
    }

    // Earlier numeric cells are re-rendered; their original spelling is not kept.
    fn as_text(&self) -> Vec<Option<String>> {
        match self {
            Builder::Integer(v) => v.iter().map(|x| x.map(|x| x.to_string())).collect(),
            Builder::Numeric(v) => v
                .iter()
                .map(|x| Some(*x).filter(|x| !x.is_nan()).map(|x| x.to_string()))
                .collect(),
            Builder::Text(v) => v.clone(),
        }
    }

    fn finish(self) -> Column {
        match self {
            Builder::Integer(v) => Column::Integer(v),
            Builder::Numeric(v) => Column::Numeric(v),
            Builder::Text(v) => Column::Text(v),
        }
    }
}

/// Load a CSV file. Numeric-looking columns are parsed as numbers; everything
/// else stays text. Row indices in errors are 0-based data rows.
pub fn load_csv(path: &Path, has_header: bool) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| IdsError::io(path, e))?;
    read_csv(std::io::BufReader::new(file), has_header)
}

pub fn read_csv<R: Read>(reader: R, has_header: bool) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.byte_records();
    let mut names: Option<Vec<String>> = None;
    if has_header {
        match records.next() {
            Some(r) => {
                let r = r?;
                names = Some(r.iter().map(|f| String::from_utf8_lossy(f).into_owned()).collect());
            }
            None => return Err(IdsError::Empty("csv has no header row".into())),
        }
    }
    let mut builders: Vec<Builder> = Vec::new();
    let mut width = names.as_ref().map(Vec::len);
    let mut row = 0usize;
    for rec in records {
        let rec = rec?;
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(IdsError::RaggedRow {
                row,
                expected,
                found: rec.len(),
            });
        }
        if builders.is_empty() {
            builders = (0..expected).map(|_| Builder::Integer(Vec::new())).collect();
        }
        for (b, field) in builders.iter_mut().zip(rec.iter()) {
            b.push(&String::from_utf8_lossy(field));
        }
        row += 1;
    }
    let width = width.unwrap_or(0);
    if builders.is_empty() {
        builders = (0..width).map(|_| Builder::Integer(Vec::new())).collect();
    }
    let names = names.unwrap_or_else(|| (0..width).map(|j| format!("c{j}")).collect());
    RawTable::new(names, builders.into_iter().map(Builder::finish).collect())
}

/// Counters describing what cleaning removed or rewrote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rows_in: usize,
    pub rows_dropped_nan_inf: usize,
    pub rows_dropped_duplicate: usize,
    /// Raw class name to merged class name, for merges that occurred.
    pub classes_merged: BTreeMap<String, String>,
    pub columns_dropped: Vec<String>,
}

/// Cleaned data: finite `f32` features, label strings, and cleaning stats.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanTable {
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub features: FeatureMatrix,
    pub labels: Vec<String>,
    pub provenance: Provenance,
}

impl CleanTable {
    pub fn row_count(&self) -> usize {
        self.labels.len()
    }

    /// Feature names followed by the label column name.
    pub fn column_names(&self) -> Vec<String> {
        let mut v = self.feature_names.clone();
        v.push(self.label_name.clone());
        v
    }

    /// View as a raw table again (label last), e.g. to re-clean.
    pub fn to_raw(&self) -> RawTable {
        let mut columns: Vec<Column> = (0..self.features.cols())
            .map(|j| {
                Column::Numeric(
                    self.features
                        .column(j)
                        .into_iter()
                        .map(f64::from)
                        .collect(),
                )
            })
            .collect();
        columns.push(Column::Text(self.labels.iter().cloned().map(Some).collect()));
        RawTable::new(self.column_names(), columns).expect("clean table is rectangular")
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.column_names())?;
        let mut record: Vec<String> = Vec::with_capacity(self.features.cols() + 1);
        for (row, label) in self.features.iter_rows().zip(&self.labels) {
            record.clear();
            // Display for f32 is the shortest string that reads back to the same bits
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(label.clone());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| IdsError::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn select_rows(&self, indices: &[usize]) -> CleanTable {
        CleanTable {
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Apply the cleaning rules of `profile` to `raw`.
pub fn clean(raw: &RawTable, profile: &DatasetProfile) -> Result<CleanTable> {
    let target = raw
        .column_index(&profile.target_column)
        .ok_or_else(|| IdsError::MissingColumn(profile.target_column.trim().to_string()))?;
    let dropped: Vec<usize> = profile
        .drop_columns
        .iter()
        .filter_map(|c| raw.column_index(c))
        .filter(|&j| j != target)
        .collect();
    let feature_idx: Vec<usize> = (0..raw.columns.len())
        .filter(|j| *j != target && !dropped.contains(j))
        .collect();

    let bad: Vec<String> = feature_idx
        .iter()
        .filter(|&&j| !raw.columns[j].is_numeric())
        .map(|&j| raw.column_names[j].trim().to_string())
        .collect();
    if !bad.is_empty() {
        return Err(IdsError::NonNumericColumns(bad));
    }

    let d = feature_idx.len();
    let mut prov = Provenance {
        rows_in: raw.row_count,
        columns_dropped: dropped
            .iter()
            .map(|&j| raw.column_names[j].trim().to_string())
            .collect(),
        ..Provenance::default()
    };
    let mut data: Vec<f32> = Vec::with_capacity(raw.row_count * d);
    let mut labels: Vec<String> = Vec::with_capacity(raw.row_count);
    let mut seen: HashSet<(Vec<u32>, String)> = HashSet::with_capacity(raw.row_count);
    let mut row: Vec<f32> = Vec::with_capacity(d);

    'rows: for i in 0..raw.row_count {
        row.clear();
        for &j in &feature_idx {
            match raw.columns[j].real(i) {
                // values beyond f32 range become infinite on downcast and are dropped with them
                Some(v) if (v as f32).is_finite() => row.push(v as f32),
                _ => {
                    prov.rows_dropped_nan_inf += 1;
                    continue 'rows;
                }
            }
        }
        let label = match raw.columns[target].text(i) {
            Some(l) if !l.trim().is_empty() && !is_missing_marker(&l) => l.trim().to_string(),
            _ => {
                prov.rows_dropped_nan_inf += 1;
                continue 'rows;
            }
        };
        let merged = profile.merge(&label).to_string();
        if merged != label {
            prov.classes_merged.insert(label, merged.clone());
        }
        let key = (row.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), merged);
        if seen.contains(&key) {
            prov.rows_dropped_duplicate += 1;
            continue;
        }
        data.extend_from_slice(&row);
        labels.push(key.1.clone());
        seen.insert(key);
    }

    if labels.is_empty() {
        return Err(IdsError::Empty("no rows survive cleaning".into()));
    }
    Ok(CleanTable {
        feature_names: feature_idx
            .iter()
            .map(|&j| raw.column_names[j].trim().to_string())
            .collect(),
        label_name: raw.column_names[target].trim().to_string(),
        features: FeatureMatrix::from_vec(labels.len(), d, data)?,
        labels,
        provenance: prov,
    })
}

fn is_missing_marker(s: &str) -> bool {
    matches!(parse_cell(s), Cell::Missing) || matches!(parse_cell(s), Cell::Real(v) if v.is_nan())
}

/// Features and labels of a cleaned table.
pub fn split_xy(table: &CleanTable) -> Result<(FeatureMatrix, Vec<String>)> {
    if table.features.cols() == 0 {
        return Err(IdsError::Empty("table has no feature columns".into()));
    }
    Ok((table.features.clone(), table.labels.clone()))
}

/// Class counts, most frequent first; equal counts ordered by name.
pub fn class_histogram<S: AsRef<str>>(labels: &[S]) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().map(|(k, c)| (k.to_string(), c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Collapse every class except `benign` into `Attack`.
pub fn binarize(labels: &[String], benign: &str) -> Vec<String> {
    labels
        .iter()
        .map(|l| {
            if l == benign {
                l.clone()
            } else {
                "Attack".to_string()
            }
        })
        .collect()
}

/// Class-proportional sample of `n` rows (at least one per class), returned
/// in original row order.
pub fn stratified_sample(table: &CleanTable, n: usize, seed: u64) -> CleanTable {
    if n >= table.row_count() {
        return table.clone();
    }
    let hist = class_histogram(&table.labels);
    let total = table.row_count() as f64;
    // largest-remainder apportionment
    let mut quotas: Vec<(usize, f64)> = hist
        .iter()
        .map(|(_, c)| {
            let exact = n as f64 * *c as f64 / total;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.total_cmp(&quotas[a].1).then(a.cmp(&b)));
    for &c in order.iter().take(n.saturating_sub(assigned)) {
        quotas[c].0 += 1;
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    for (ci, (name, count)) in hist.iter().enumerate() {
        let mut idx: Vec<usize> = (0..table.row_count())
            .filter(|&i| &table.labels[i] == name)
            .collect();
        let mut rng = rng::stream(seed, Domain::Sample, &[ci as u64]);
        idx.shuffle(&mut rng);
        let take = quotas[ci].0.clamp(1, *count);
        chosen.extend_from_slice(&idx[..take]);
    }
    chosen.sort_unstable();
    table.select_rows(&chosen)
}
