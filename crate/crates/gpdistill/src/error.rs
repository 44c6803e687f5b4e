use std::path::PathBuf;

use thiserror::Error;

/// Harness errors, split so the CLI can map them onto exit codes:
/// configuration problems exit with 2, numerical failures with 3.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("config error: cannot read {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error in {path} at row {row}, column {column}: {message}")]
    Csv {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] gpdistill_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) => 3,
            HarnessError::Core(
                gpdistill_core::Error::NotPositiveDefinite { .. }
                | gpdistill_core::Error::Numerical(_),
            ) => 3,
            _ => 2,
        }
    }
}
