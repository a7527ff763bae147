use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Solver(#[from] manial_core::error::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {msg}", path.display())]
    Trace { path: PathBuf, msg: String },
    #[error("unreadable traces:\n{0}")]
    Traces(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
