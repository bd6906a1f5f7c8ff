//! End-to-end commands: clean, train, cross-validate, predict, generate.

pub mod chain;
pub mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{IdsError, Result};
use crate::eval::{
    cross_validate, CvSettings, CvTimings, EvaluationReport, ReportMetadata, REPORT_FORMAT,
    REPORT_VERSION,
};
use crate::ingest::{
    binarize, class_histogram, clean, load_csv, stratified_sample, CleanTable, DatasetProfile,
    Provenance,
};
use crate::matrix::FeatureMatrix;
use crate::models::{ModelFile, ModelSpec};
use crate::pca::{explained_variance_ratio, reduction_ratio};
use crate::resample::{class_counts, ResamplePlan};
use crate::sfe::SfeConfig;
use crate::synth::{generate, SynthSpec};
use crate::transform::{encode_labels, fit_label_encoder, LabelMap};

pub use chain::{
    fit_transforms, Fingerprint, FittedTransformChain, FittedTransforms, TransformSpec,
    TransformStages,
};
pub use config::{LeakageMode, PipelineConfig};

pub const TRAIN_REPORT_FORMAT: &str = "ids-train-report";

/// `report.json` → `report.<suffix>.json`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(format!("{suffix}.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| IdsError::io(path, e))
}

fn write_table(table: &CleanTable, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| IdsError::io(path, e))?;
    table.write_csv(BufWriter::new(f))
}

/// Cleans every `*.csv` in `dir` (sorted by name) and stacks them; rows
/// duplicated across files are dropped too.
fn load_dir(dir: &Path, has_header: bool, profile: &DatasetProfile) -> Result<CleanTable> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| IdsError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    let mut acc: Option<CleanTable> = None;
    for f in &files {
        let part = clean(&load_csv(f, has_header)?, profile)?;
        acc = Some(match acc {
            None => part,
            Some(mut a) => {
                if a.feature_names != part.feature_names {
                    let missing = a
                        .feature_names
                        .iter()
                        .filter(|c| !part.feature_names.contains(c))
                        .cloned()
                        .collect();
                    let extra = part
                        .feature_names
                        .iter()
                        .filter(|c| !a.feature_names.contains(c))
                        .cloned()
                        .collect();
                    return Err(IdsError::ColumnMismatch { missing, extra });
                }
                a.features = a.features.vstack(&part.features)?;
                a.labels.extend(part.labels);
                let p = &mut a.provenance;
                p.rows_in += part.provenance.rows_in;
                p.rows_dropped_nan_inf += part.provenance.rows_dropped_nan_inf;
                p.rows_dropped_duplicate += part.provenance.rows_dropped_duplicate;
                p.classes_merged.extend(part.provenance.classes_merged);
                a
            }
        });
    }
    let table = acc.ok_or_else(|| IdsError::Empty(format!("no CSV files in {}", dir.display())))?;
    if files.len() == 1 {
        return Ok(table);
    }
    let ident = DatasetProfile::identity(&profile.name, &table.label_name);
    let mut again = clean(&table.to_raw(), &ident)?;
    let mut prov = table.provenance;
    prov.rows_dropped_duplicate += again.provenance.rows_dropped_duplicate;
    again.provenance = prov;
    Ok(again)
}

/// Clean `input` (a CSV file or a directory of them) under the configured profile, then apply the binary
/// relabelling and row sample if requested.
pub fn load_dataset(cfg: &PipelineConfig, input: &Path) -> Result<(CleanTable, DatasetProfile)> {
    let profile = cfg.profile()?;
    let mut table = if input.is_dir() {
        load_dir(input, cfg.data.has_header, &profile)?
    } else {
        clean(&load_csv(input, cfg.data.has_header)?, &profile)?
    };
    log::info!(
        "{}: {} rows in, {} kept ({} non-finite, {} duplicate)",
        input.display(),
        table.provenance.rows_in,
        table.row_count(),
        table.provenance.rows_dropped_nan_inf,
        table.provenance.rows_dropped_duplicate
    );
    if cfg.data.binary {
        let benign = profile.benign_label.as_deref().ok_or_else(|| {
            IdsError::Config(format!("profile `{}` names no benign label", profile.name))
        })?;
        let labels = binarize(&table.labels, benign);
        let relabelled = CleanTable { labels, ..table };
        // distinct attack rows can coincide once their classes are merged
        let ident = DatasetProfile::identity(&profile.name, &relabelled.label_name);
        let mut again = clean(&relabelled.to_raw(), &ident)?;
        let mut prov = relabelled.provenance.clone();
        prov.rows_dropped_duplicate += again.provenance.rows_dropped_duplicate;
        again.provenance = prov;
        table = again;
    }
    if let Some(n) = cfg.data.sample_rows {
        table = stratified_sample(&table, n, cfg.seed);
    }
    Ok((table, profile))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepReport {
    pub profile: String,
    pub rows_out: usize,
    pub feature_columns: Vec<String>,
    pub label_column: String,
    pub class_histogram: Vec<(String, usize)>,
    pub sample_rows: Option<usize>,
    pub binary: bool,
    pub provenance: Provenance,
}

/// Writes the cleaned CSV to `out` and a provenance file next to it.
pub fn cmd_prep(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<PrepReport> {
    let (table, profile) = load_dataset(cfg, input)?;
    write_table(&table, out)?;
    let report = PrepReport {
        profile: profile.name.clone(),
        rows_out: table.row_count(),
        feature_columns: table.feature_names.clone(),
        label_column: table.label_name.clone(),
        class_histogram: class_histogram(&table.labels),
        sample_rows: cfg.data.sample_rows,
        binary: cfg.data.binary,
        provenance: table.provenance.clone(),
    };
    write_json(&sidecar(out, "provenance"), &report)?;
    Ok(report)
}

fn transform_spec(cfg: &PipelineConfig, n_classes: usize) -> TransformSpec {
    TransformSpec {
        oversample: cfg.oversample.enabled,
        sfe: cfg
            .sfe
            .enabled
            .then(|| cfg.sfe.resolve(n_classes, cfg.seed)),
        pca_k: cfg.pca.enabled.then_some(cfg.pca.k),
        seed: cfg.seed,
    }
}

fn encode(table: &CleanTable) -> Result<(LabelMap, Vec<usize>)> {
    let map = fit_label_encoder(&table.labels)?;
    let y = encode_labels(&map, &table.labels)?;
    Ok((map, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetadata {
    pub dataset_profile: String,
    pub input_sha256: String,
    pub seed: u64,
    pub leakage_mode: LeakageMode,
    pub binary: bool,
    pub sample_rows: Option<usize>,
    pub n_rows: usize,
    pub n_features: usize,
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
    pub conventions: std::collections::BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfeSummary {
    pub config: SfeConfig,
    pub kmeans_inertia: f64,
    pub kmeans_iterations: usize,
    pub gmm_iterations: usize,
    pub gmm_final_log_likelihood: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub k: usize,
    pub d_in: usize,
    pub reduction_ratio: f64,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub format: String,
    pub version: u32,
    pub metadata: TrainMetadata,
    pub stages: Vec<String>,
    pub rows_after_oversample: usize,
    pub class_counts_after_oversample: Vec<usize>,
    pub resample: Option<ResamplePlan>,
    pub sfe: Option<SfeSummary>,
    pub pca: Option<PcaSummary>,
    pub d_out: usize,
    pub model: ModelSpec,
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTimings {
    pub transform_fit_ms: f64,
    pub model_fit_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub model_path: PathBuf,
    pub chain_path: PathBuf,
    pub report_path: PathBuf,
}

/// Fits the transform chain and one model on the whole dataset and writes
/// `model.json`, `chain.json` and `train_report.json` into `out_dir`.
pub fn cmd_train(cfg: &PipelineConfig, input: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let spec = cfg.single_model()?;
    let (table, profile) = load_dataset(cfg, input)?;
    let (label_map, y) = encode(&table)?;
    let n_classes = label_map.n_classes();
    let tspec = transform_spec(cfg, n_classes);

    let t = Instant::now();
    let fitted = fit_transforms(&table.features, &y, &tspec)?;
    let transform_fit_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let model = spec.fit(&fitted.x, &fitted.y, n_classes, cfg.seed)?;
    let model_fit_ms = t.elapsed().as_secs_f64() * 1e3;
    let train_pred = model.predict(&fitted.x)?;
    let correct = train_pred.iter().zip(&fitted.y).filter(|(a, b)| a == b).count();

    let mut ignored = profile.drop_columns.clone();
    ignored.push(profile.target_column.clone());
    let fingerprint = Fingerprint::of(&table, ignored);
    let chain = FittedTransformChain::new(fingerprint.clone(), label_map.clone(), fitted.stages.clone());
    chain.validate()?;

    let report = TrainReport {
        format: TRAIN_REPORT_FORMAT.into(),
        version: 1,
        metadata: TrainMetadata {
            dataset_profile: profile.name.clone(),
            input_sha256: fingerprint.sha256.clone(),
            seed: cfg.seed,
            leakage_mode: cfg.leakage,
            binary: cfg.data.binary,
            sample_rows: cfg.data.sample_rows,
            n_rows: table.row_count(),
            n_features: table.features.cols(),
            classes: label_map.classes().to_vec(),
            class_counts: class_counts(&y),
            conventions: crate::eval::conventions(),
        },
        stages: chain.stages.clone(),
        rows_after_oversample: fitted.y.len(),
        class_counts_after_oversample: class_counts(&fitted.y),
        resample: fitted.plan.clone(),
        sfe: fitted.stages.sfe.as_ref().map(|m| SfeSummary {
            config: tspec.sfe.clone().expect("sfe enabled"),
            kmeans_inertia: m.kmeans.inertia,
            kmeans_iterations: m.kmeans.iterations_run,
            gmm_iterations: m.gmm.iterations_run,
            gmm_final_log_likelihood: m.gmm.log_likelihood_trace.last().copied(),
        }),
        pca: fitted.stages.pca.as_ref().map(|p| PcaSummary {
            k: p.k_out(),
            d_in: p.d_in(),
            reduction_ratio: reduction_ratio(p),
            eigenvalues: p.eigenvalues.clone(),
            explained_variance_ratio: explained_variance_ratio(p),
        }),
        d_out: fitted.stages.output_dim(),
        model: spec.clone(),
        training_accuracy: correct as f64 / fitted.y.len() as f64,
    };

    std::fs::create_dir_all(out_dir).map_err(|e| IdsError::io(out_dir, e))?;
    let model_path = out_dir.join("model.json");
    let chain_path = out_dir.join("chain.json");
    let report_path = out_dir.join("train_report.json");
    ModelFile::new(label_map.classes().to_vec(), model).save(&model_path)?;
    chain.save(&chain_path)?;
    write_json(&report_path, &report)?;
    write_json(
        &sidecar(&report_path, "timings"),
        &TrainTimings {
            transform_fit_ms,
            model_fit_ms,
        },
    )?;
    Ok(TrainOutcome {
        report,
        model_path,
        chain_path,
        report_path,
    })
}

/// Cross-validation on an already loaded table.
pub fn evaluate_table(
    cfg: &PipelineConfig,
    table: &CleanTable,
    profile_name: &str,
) -> Result<(EvaluationReport, CvTimings)> {
    let models = cfg.model_specs()?;
    let (label_map, y) = encode(table)?;
    let n_classes = label_map.n_classes();
    let tspec = transform_spec(cfg, n_classes);
    let cv = CvSettings {
        k: cfg.cv.k,
        stratified: cfg.cv.stratified,
    };
    let out = cross_validate(&tspec, &models, &table.features, &y, n_classes, cv, cfg.leakage)?;
    let fingerprint = Fingerprint::of(table, Vec::new());
    let report = EvaluationReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        metadata: ReportMetadata {
            dataset_profile: profile_name.to_string(),
            input_sha256: fingerprint.sha256,
            seed: cfg.seed,
            leakage_mode: cfg.leakage,
            cv_k: cv.k,
            stratified: cv.stratified,
            binary: cfg.data.binary,
            sample_rows: cfg.data.sample_rows,
            n_rows: table.row_count(),
            n_features: table.features.cols(),
            classes: label_map.classes().to_vec(),
            class_counts: class_counts(&y),
            oversample: tspec.oversample,
            sfe: tspec.sfe.clone(),
            pca_k: tspec.pca_k,
            conventions: crate::eval::conventions(),
        },
        transforms: out.transforms,
        fold_sizes: out.fold_sizes,
        audit: out.audit,
        models: out.models,
    };
    Ok((report, out.timings))
}

/// Writes the evaluation report to `out` and timings next to it.
pub fn cmd_eval(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<EvaluationReport> {
    let (table, profile) = load_dataset(cfg, input)?;
    let (report, timings) = evaluate_table(cfg, &table, &profile.name)?;
    write_json(out, &report)?;
    write_json(&sidecar(out, "timings"), &timings)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictOutcome {
    pub rows_predicted: usize,
    /// Input rows skipped because a feature was missing or non-finite.
    pub rows_skipped: Vec<usize>,
}

/// Applies a stored chain and model to `input`, writing one line per row:
/// input row index, predicted class, then one probability per class.
pub fn cmd_predict(model_path: &Path, chain_path: &Path, input: &Path, out: &Path) -> Result<PredictOutcome> {
    let chain = FittedTransformChain::load(chain_path)?;
    let model = ModelFile::load(model_path)?;
    if model.classes != chain.label_map.classes() {
        return Err(IdsError::Format {
            kind: "model",
            detail: "model classes differ from the chain's label map".into(),
        });
    }
    if model.model.n_features() != chain.transforms.output_dim() {
        return Err(IdsError::Format {
            kind: "model",
            detail: format!(
                "model expects {} features but the chain produces {}",
                model.model.n_features(),
                chain.transforms.output_dim()
            ),
        });
    }
    let raw = load_csv(input, true)?;
    let fp = &chain.fingerprint;
    let missing: Vec<String> = fp
        .columns
        .iter()
        .filter(|c| raw.column_index(c).is_none())
        .cloned()
        .collect();
    let extra: Vec<String> = raw
        .column_names
        .iter()
        .filter(|c| {
            let c = c.trim();
            !fp.columns.iter().any(|f| f == c)
                && c != fp.label_column
                && !fp.ignored_columns.iter().any(|f| f.trim() == c)
        })
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(IdsError::ColumnMismatch { missing, extra });
    }
    let idx: Vec<usize> = fp
        .columns
        .iter()
        .map(|c| raw.column_index(c).expect("checked above"))
        .collect();
    let text: Vec<String> = idx
        .iter()
        .filter(|&&j| !raw.columns[j].is_numeric())
        .map(|&j| raw.column_names[j].clone())
        .collect();
    if !text.is_empty() {
        return Err(IdsError::NonNumericColumns(text));
    }

    let d = idx.len();
    let mut data = Vec::with_capacity(raw.row_count * d);
    let mut kept = Vec::with_capacity(raw.row_count);
    let mut skipped = Vec::new();
    let mut row = Vec::with_capacity(d);
    'rows: for i in 0..raw.row_count {
        row.clear();
        for &j in &idx {
            match raw.columns[j].real(i) {
                Some(v) if (v as f32).is_finite() => row.push(v as f32),
                _ => {
                    skipped.push(i);
                    continue 'rows;
                }
            }
        }
        data.extend_from_slice(&row);
        kept.push(i);
    }
    if !skipped.is_empty() {
        log::warn!("{} rows skipped for missing or non-finite values", skipped.len());
    }
    let x = FeatureMatrix::from_vec(kept.len(), d, data)?;
    let z = chain.apply(&x)?;
    let proba = model.model.predict_proba(&z)?;

    let f = File::create(out).map_err(|e| IdsError::io(out, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let mut header = vec!["row".to_string(), "predicted".to_string()];
    header.extend(model.classes.iter().map(|c| format!("p_{c}")));
    w.write_record(&header)?;
    for (r, &i) in kept.iter().enumerate() {
        let p = proba.row(r);
        let mut rec = vec![i.to_string(), model.classes[crate::matrix::argmax(p)].clone()];
        rec.extend(p.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| IdsError::io(out, e))?;
    Ok(PredictOutcome {
        rows_predicted: kept.len(),
        rows_skipped: skipped,
    })
}

/// Writes a synthetic dataset in benchmark CSV layout.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<CleanTable> {
    let table = generate(spec)?;
    write_table(&table, out)?;
    Ok(table)
}
