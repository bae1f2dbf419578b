use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Invalid(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("method ppo needs a policy checkpoint")]
    MissingCheckpoint,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] upmsp_core::CoreError),
    #[error(transparent)]
    Nn(#[from] upmsp_nn::NnError),
    #[error(transparent)]
    Ppo(#[from] upmsp_ppo::PpoError),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
