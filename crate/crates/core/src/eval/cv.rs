//! k-fold cross-validation of one or more models behind the transform chain.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::make_folds;
use super::metrics::{
    accuracy, confusion_matrix, per_class_metrics, precision_recall_f1, Averaging, ClassMetrics,
    ConfusionMatrix, Prf,
};
use super::roc::{auc, multiclass_auc, roc_curve, RocPoint};
use crate::error::{IdsError, Result};
use crate::matrix::{FeatureMatrix, RealMatrix};
use crate::models::{ModelKind, ModelSpec};
use crate::pca::explained_variance_ratio;
use crate::pipeline::chain::{fit_transforms, TransformSpec};
use crate::pipeline::config::LeakageMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSettings {
    pub k: usize,
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Oversampled copies among the training rows.
    pub appended_in_train: usize,
    /// Oversampled copies among the test rows.
    pub appended_in_test: usize,
    /// Test rows that are, or are copies of, the same original row as some
    /// training row.
    pub test_rows_sharing_origin_with_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub mode: LeakageMode,
    /// Rows the folds were drawn from (after oversampling in faithful mode).
    pub rows_evaluated: usize,
    pub appended_rows_in_test: usize,
    pub test_rows_sharing_origin_with_train: usize,
    pub folds: Vec<FoldAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub weighted: Prf,
    pub micro: Prf,
    /// Positive-class AUC for two classes, one-vs-rest macro otherwise.
    pub auc: Option<f64>,
    pub confusion_matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub class: usize,
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

/// Metrics over the pooled out-of-fold predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// trace / total of the summed confusion matrix.
    pub accuracy: f64,
    pub mean_fold_accuracy: f64,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub weighted: Prf,
    pub micro: Prf,
    pub per_class: Vec<ClassMetrics>,
    pub confusion_matrix: ConfusionMatrix,
    pub auc: f64,
    /// Binary: the positive class (code 1) only. Multiclass: one curve per
    /// class present.
    pub roc: Vec<ClassRoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: ModelKind,
    pub spec: ModelSpec,
    pub folds: Vec<FoldRecord>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSummary {
    pub stages: Vec<String>,
    pub d_in: usize,
    pub d_out: usize,
    pub reduction_ratio: Option<f64>,
    /// Only in faithful mode, where a single PCA is fitted.
    pub explained_variance_ratio: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub model: ModelKind,
    pub fit_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTimings {
    pub transform_fit_ms: f64,
    pub models: Vec<ModelTiming>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub fold_sizes: Vec<usize>,
    pub audit: LeakageAudit,
    pub transforms: TransformSummary,
    pub models: Vec<ModelReport>,
    pub timings: CvTimings,
}

struct FoldRun {
    test: Vec<usize>,
    audit: FoldAudit,
    transform_ms: f64,
    stages: Vec<String>,
    d_out: usize,
    reduction_ratio: Option<f64>,
    // per model: predictions, probabilities, fit ms, predict ms
    results: Vec<(Vec<usize>, RealMatrix, f64, f64)>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn fit_models(
    models: &[ModelSpec],
    x_train: &FeatureMatrix,
    y_train: &[usize],
    x_test: &FeatureMatrix,
    n_classes: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, RealMatrix, f64, f64)>> {
    models
        .iter()
        .map(|spec| {
            let t = Instant::now();
            let m = spec.fit(x_train, y_train, n_classes, seed)?;
            let fit_ms = ms_since(t);
            let t = Instant::now();
            let proba = m.predict_proba(x_test)?;
            let pred = proba.iter_rows().map(crate::matrix::argmax).collect();
            Ok((pred, proba, fit_ms, ms_since(t)))
        })
        .collect()
}

fn count_shared(train_origins: &[usize], test_origins: &[usize], n_origins: usize) -> usize {
    let mut in_train = vec![false; n_origins];
    for &o in train_origins {
        in_train[o] = true;
    }
    test_origins.iter().filter(|&&o| in_train[o]).count()
}

/// Cross-validate `models` on cleaned, unscaled features `x` with class
/// codes `y`. Folds run in parallel; results are assembled in fold order.
pub fn cross_validate(
    transforms: &TransformSpec,
    models: &[ModelSpec],
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    cv: CvSettings,
    mode: LeakageMode,
) -> Result<CvOutcome> {
    if models.is_empty() {
        return Err(IdsError::InvalidArgument("no models to evaluate".into()));
    }
    if x.rows() != y.len() {
        return Err(IdsError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = y.len();
    let seed = transforms.seed;
    let d_in = x.cols();

    let (runs, y_eval, plan_folds, shared_summary) = match mode {
        LeakageMode::Faithful => {
            let t = Instant::now();
            let fitted = fit_transforms(x, y, transforms)?;
            let transform_ms = ms_since(t);
            let origin: Vec<usize> = (0..n)
                .chain(fitted.plan.iter().flat_map(|p| p.source_indices.iter().copied()))
                .collect();
            let plan = make_folds(&fitted.y, cv.k, cv.stratified, seed)?;
            let stages: Vec<String> = fitted.stages.stage_names().iter().map(|s| s.to_string()).collect();
            let d_out = fitted.stages.output_dim();
            let runs: Vec<FoldRun> = (0..cv.k)
                .into_par_iter()
                .map(|f| {
                    let train = plan.train_indices(f);
                    let test = plan.test_indices(f);
                    let xtr = fitted.x.select_rows(&train);
                    let ytr: Vec<usize> = train.iter().map(|&i| fitted.y[i]).collect();
                    let xte = fitted.x.select_rows(&test);
                    let results = fit_models(models, &xtr, &ytr, &xte, n_classes, seed)?;
                    let tr_o: Vec<usize> = train.iter().map(|&i| origin[i]).collect();
                    let te_o: Vec<usize> = test.iter().map(|&i| origin[i]).collect();
                    let audit = FoldAudit {
                        fold: f,
                        n_train: train.len(),
                        n_test: test.len(),
                        appended_in_train: train.iter().filter(|&&i| i >= n).count(),
                        appended_in_test: test.iter().filter(|&&i| i >= n).count(),
                        test_rows_sharing_origin_with_train: count_shared(&tr_o, &te_o, n),
                    };
                    Ok(FoldRun {
                        test,
                        audit,
                        transform_ms: 0.0,
                        stages: stages.clone(),
                        d_out,
                        reduction_ratio: None,
                        results,
                    })
                })
                .collect::<Result<_>>()?;
            let summary = TransformSummary {
                stages,
                d_in,
                d_out,
                reduction_ratio: fitted.stages.pca.as_ref().map(crate::pca::reduction_ratio),
                explained_variance_ratio: fitted.stages.pca.as_ref().map(explained_variance_ratio),
            };
            (runs, fitted.y.clone(), plan, (summary, transform_ms))
        }
        LeakageMode::Strict => {
            let plan = make_folds(y, cv.k, cv.stratified, seed)?;
            let runs: Vec<FoldRun> = (0..cv.k)
                .into_par_iter()
                .map(|f| {
                    let train = plan.train_indices(f);
                    let test = plan.test_indices(f);
                    let ytr: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                    let t = Instant::now();
                    let fitted = fit_transforms(&x.select_rows(&train), &ytr, transforms)?;
                    let xte = fitted.stages.apply(&x.select_rows(&test))?;
                    let transform_ms = ms_since(t);
                    let results = fit_models(models, &fitted.x, &fitted.y, &xte, n_classes, seed)?;
                    let mut tr_o = train.clone();
                    if let Some(p) = &fitted.plan {
                        tr_o.extend(p.source_indices.iter().map(|&s| train[s]));
                    }
                    let audit = FoldAudit {
                        fold: f,
                        n_train: fitted.y.len(),
                        n_test: test.len(),
                        appended_in_train: fitted.plan.as_ref().map_or(0, |p| p.appended()),
                        appended_in_test: 0,
                        test_rows_sharing_origin_with_train: count_shared(&tr_o, &test, n),
                    };
                    Ok(FoldRun {
                        test,
                        audit,
                        transform_ms,
                        stages: fitted.stages.stage_names().iter().map(|s| s.to_string()).collect(),
                        d_out: fitted.stages.output_dim(),
                        reduction_ratio: fitted.stages.pca.as_ref().map(crate::pca::reduction_ratio),
                        results,
                    })
                })
                .collect::<Result<_>>()?;
            let summary = TransformSummary {
                stages: runs[0].stages.clone(),
                d_in,
                d_out: runs[0].d_out,
                reduction_ratio: runs[0].reduction_ratio,
                explained_variance_ratio: None,
            };
            let ms = runs.iter().map(|r| r.transform_ms).sum();
            (runs, y.to_vec(), plan, (summary, ms))
        }
    };
    let (transform_summary, transform_fit_ms) = shared_summary;

    let n_eval = y_eval.len();
    let mut reports = Vec::with_capacity(models.len());
    let mut timings = Vec::with_capacity(models.len());
    for (mi, spec) in models.iter().enumerate() {
        let mut oof_proba = RealMatrix::zeros(n_eval, n_classes);
        let mut folds = Vec::with_capacity(cv.k);
        let mut cm_sum = ConfusionMatrix::zeros(n_classes);
        let (mut fit_ms, mut predict_ms) = (0.0, 0.0);
        for (f, run) in runs.iter().enumerate() {
            let (pred, proba, fm, pm) = &run.results[mi];
            fit_ms += fm;
            predict_ms += pm;
            let yt: Vec<usize> = run.test.iter().map(|&i| y_eval[i]).collect();
            let cm = confusion_matrix(&yt, pred, n_classes)?;
            for (j, &i) in run.test.iter().enumerate() {
                oof_proba.row_mut(i).copy_from_slice(proba.row(j));
            }
            folds.push(FoldRecord {
                fold: f,
                n_train: run.audit.n_train,
                n_test: run.test.len(),
                accuracy: accuracy(&cm)?,
                macro_avg: precision_recall_f1(&cm, Averaging::Macro)?,
                weighted: precision_recall_f1(&cm, Averaging::Weighted)?,
                micro: precision_recall_f1(&cm, Averaging::Micro)?,
                auc: score_auc(&yt, proba, n_classes).ok(),
                confusion_matrix: cm.clone(),
            });
            cm_sum.add(&cm)?;
        }
        let mean_fold_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
        let roc = roc_curves(&y_eval, &oof_proba, n_classes)?;
        let aggregate = Aggregate {
            accuracy: accuracy(&cm_sum)?,
            mean_fold_accuracy,
            macro_avg: precision_recall_f1(&cm_sum, Averaging::Macro)?,
            weighted: precision_recall_f1(&cm_sum, Averaging::Weighted)?,
            micro: precision_recall_f1(&cm_sum, Averaging::Micro)?,
            per_class: per_class_metrics(&cm_sum),
            confusion_matrix: cm_sum,
            auc: score_auc(&y_eval, &oof_proba, n_classes)?,
            roc,
        };
        reports.push(ModelReport {
            model: spec.kind,
            spec: spec.clone(),
            folds,
            aggregate,
        });
        timings.push(ModelTiming {
            model: spec.kind,
            fit_ms,
            predict_ms,
        });
    }

    let fold_audits: Vec<FoldAudit> = runs.into_iter().map(|r| r.audit).collect();
    let audit = LeakageAudit {
        mode,
        rows_evaluated: n_eval,
        appended_rows_in_test: fold_audits.iter().map(|a| a.appended_in_test).sum(),
        test_rows_sharing_origin_with_train: fold_audits
            .iter()
            .map(|a| a.test_rows_sharing_origin_with_train)
            .sum(),
        folds: fold_audits,
    };
    Ok(CvOutcome {
        fold_sizes: plan_folds.fold_sizes(),
        audit,
        transforms: transform_summary,
        models: reports,
        timings: CvTimings {
            transform_fit_ms,
            models: timings,
        },
    })
}

/// Positive-class AUC for two classes, one-vs-rest macro AUC otherwise.
pub fn score_auc(y: &[usize], proba: &RealMatrix, n_classes: usize) -> Result<f64> {
    if n_classes == 2 {
        let labels: Vec<bool> = y.iter().map(|&c| c == 1).collect();
        auc(&labels, &proba.column(1))
    } else {
        Ok(multiclass_auc(y, proba)?.macro_avg)
    }
}

fn roc_curves(y: &[usize], proba: &RealMatrix, n_classes: usize) -> Result<Vec<ClassRoc>> {
    let classes: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (0..n_classes).collect()
    };
    let mut out = Vec::new();
    for c in classes {
        let labels: Vec<bool> = y.iter().map(|&l| l == c).collect();
        let pos = labels.iter().filter(|&&b| b).count();
        if pos == 0 || pos == labels.len() {
            continue;
        }
        let scores = proba.column(c);
        out.push(ClassRoc {
            class: c,
            auc: auc(&labels, &scores)?,
            points: roc_curve(&labels, &scores)?,
        });
    }
    Ok(out)
}
