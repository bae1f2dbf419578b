use thiserror::Error;

use upmsp_core::CoreError;
use upmsp_nn::NnError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("non-finite probability ratio at step {step}")]
    NonFiniteRatio { step: usize },
    #[error("training diverged at update {update}: mean |ratio - 1| = {deviation}")]
    Diverged { update: usize, deviation: f64 },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T, E = PpoError> = std::result::Result<T, E>;
