use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing artifact {}: {hint}", path.display())]
    MissingArtifact { path: PathBuf, hint: String },
    #[error("gradient check failed: {0}")]
    GradCheckFailed(String),
    #[error("refusing to export: {0}")]
    Export(String),
    #[error(transparent)]
    Core(#[from] intmit::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Core(intmit::Error::Config(_)) => 2,
            BenchError::MissingArtifact { .. } => 3,
            BenchError::GradCheckFailed(_) => 4,
            _ => 1,
        }
    }
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;
