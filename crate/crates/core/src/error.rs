use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("frequency {omega} is not on a DFT bin of the grid (bin index {bin:.6}); pass loose mode to allow it")]
    Incommensurate { omega: f64, bin: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("truncation deficit {deficit:.3e} exceeds 1e-10 at dim {dim}")]
    Truncation { dim: usize, deficit: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("too many factors: {count} (limit {limit})")]
    TooManyFactors { count: usize, limit: usize },

    #[error("factor {0} needs a branch label for double-time ordering")]
    MissingBranch(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ODE step too coarse: estimated local error {estimate:.3e} > {tolerance:.3e} near t = {time}")]
    StepTooCoarse { estimate: f64, tolerance: f64, time: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown suite `{0}`")]
    UnknownSuite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
