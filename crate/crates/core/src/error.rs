use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CdrmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CdrmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDivergence { epoch: usize, reason: String },

    #[error("Langevin sampling failed: non-finite gradient for sample {sample}")]
    SamplingFailure { sample: usize },

    #[error("valid set is empty")]
    EmptyValidSet,

    #[error("model has no fitted KDE statistics; fit them before inference")]
    UnpreparedModel,

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("tuple {index} lies outside the grid bounds")]
    OutOfBounds { index: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported model schema version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model self-check failed: {0}")]
    SelfCheck(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CdrmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CdrmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(CdrmError::DimensionMismatch { expected, got })
        }
    }
}
