//! Intrusion-detection pipeline: cleaning, standardization, random
//! oversampling, cluster meta-features, PCA, tree ensembles and
//! cross-validated evaluation.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod matrix;
pub mod models;
pub mod pca;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod sfe;
pub mod synth;
pub mod transform;

pub use error::{IdsError, Result};
pub use eval::{EvaluationReport, FoldPlan};
pub use ingest::{CleanTable, DatasetProfile, RawTable};
pub use matrix::{FeatureMatrix, RealMatrix};
pub use models::{ModelFile, ModelKind, ModelSpec, TrainedModel};
pub use pipeline::{FittedTransformChain, LeakageMode, PipelineConfig};
pub use resample::ResamplePlan;
pub use sfe::{EmbedMode, SfeConfig};
pub use transform::{LabelMap, ScalerParams};
