use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants fall into three families that map onto process exit codes:
/// configuration problems, data problems, and violated internal invariants.
#[derive(Debug, Error)]
pub enum IdsError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("column `{0}` not found")]
    MissingColumn(String),

    #[error("non-numeric feature columns: {}", .0.join(", "))]
    NonNumericColumns(Vec<String>),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("label `{0}` was not seen during fitting")]
    UnseenLabel(String),

    #[error("class code {code} out of range for {classes} classes")]
    CodeOutOfRange { code: usize, classes: usize },

    #[error("column set mismatch; missing: [{}], extra: [{}]", missing.join(", "), extra.join(", "))]
    ColumnMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("unsupported {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl IdsError {
    /// Process exit code: 2 config, 3 data, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            IdsError::Config(_) | IdsError::InvalidArgument(_) => 2,
            IdsError::Invariant(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IdsError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for IdsError {
    fn from(e: serde_json::Error) -> Self {
        IdsError::Format {
            kind: "json",
            detail: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, IdsError>;
