//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh integrity: {0}")]
    MeshIntegrity(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("iteration did not converge: {0}")]
    NonConvergence(String),

    #[error("contour: {0}")]
    Contour(String),

    #[error("evaluation point too close to the boundary: {0}")]
    Proximity(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("instability detected at step {step}: energy {energy:.3e}")]
    Instability { step: usize, energy: f64 },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("configuration: {0}")]
    Configuration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Config { .. }
            | Error::Configuration(_)
            | Error::MeshIntegrity(_)
            | Error::Dimension(_)
            | Error::Io(_) => 2,
            Error::Factorization(_)
            | Error::NonConvergence(_)
            | Error::Contour(_)
            | Error::Proximity(_)
            | Error::Instability { .. } => 3,
        }
    }
}
