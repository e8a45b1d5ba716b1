use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations at t = {time:e} s (last increment ratio {ratio:e})")]
    NoConvergence {
        iterations: usize,
        time: f64,
        ratio: f64,
    },

    #[error("degenerate reference: energy norm of the reference trajectory is {0:e}")]
    DegenerateReference(f64),

    #[error("insufficient data for rate fit: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned characteristic roots: {0}")]
    IllConditionedRoots(String),

    #[error("trajectory mismatch: {0}")]
    TrajectoryMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
