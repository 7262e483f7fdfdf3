use thiserror::Error;

use crate::estimation::EstimationError;
use crate::protocol::Abort;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate intensities: mu[{0}] == mu[{1}]")]
    DegenerateIntensities(usize, usize),

    #[error("Fock truncation n_max = {n_max} leaves tail mass {tail:e}; increase n_max")]
    TruncationTooSmall { n_max: usize, tail: f64 },

    #[error("no nonnegative decomposition of the coherent states: {0}")]
    Infeasible(String),

    #[error("LDPC construction failed: {0}")]
    CodeConstruction(String),

    #[error("estimation: {0}")]
    Estimation(#[from] EstimationError),

    #[error("protocol aborted: {0}")]
    Aborted(Abort),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
