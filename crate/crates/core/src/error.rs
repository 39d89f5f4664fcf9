use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dim { op: &'static str, detail: String },

    #[error("rank {k} out of range 1..={max}")]
    Rank { k: usize, max: usize },

    #[error("non-finite value in {0}")]
    Num(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    Spd(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("averaged iterate requested before the first step")]
    EmptyRun,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("problem has no known optimal loss")]
    UnknownOptimum,

    #[error("non-positive suboptimality gap {gap} at T={steps}; cannot fit on a log scale")]
    NonPositiveGap { steps: usize, gap: f64 },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
