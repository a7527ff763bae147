use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("point is not feasible (error {0:.3e})")]
    Infeasible(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:.6e})")]
    NotPositiveDefinite(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
