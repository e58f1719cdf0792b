use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no convergence after {iterations} iterations (last iterate {last}, residual {residual:e})")]
    ConvergenceFailure {
        iterations: usize,
        last: f64,
        residual: f64,
    },

    #[error("no parameter triple satisfies the power constraint: {0}")]
    InfeasibleSearch(String),

    #[error("SDR {sdr} does not exceed lambda^2 = {lambda_sq}; the scheme cannot stabilize the plant")]
    InfeasibleRegime { sdr: f64, lambda_sq: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }
}
