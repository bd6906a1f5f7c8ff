//! Cross-validation, confusion matrices, averaged precision/recall/F1 and
//! ROC analysis.

mod cv;
mod folds;
mod metrics;
mod report;
mod roc;

pub use cv::{
    cross_validate, score_auc, Aggregate, ClassRoc, CvOutcome, CvSettings, CvTimings, FoldAudit,
    FoldRecord, LeakageAudit, ModelReport, ModelTiming, TransformSummary,
};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{
    accuracy, confusion_matrix, per_class_metrics, precision_recall_f1, Averaging, ClassMetrics,
    ConfusionMatrix, Prf,
};
pub use report::{conventions, summary_table, EvaluationReport, ReportMetadata, REPORT_FORMAT, REPORT_VERSION};
pub use roc::{auc, multiclass_auc, roc_curve, MulticlassAuc, RocPoint};
