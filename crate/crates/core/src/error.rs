use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("infeasible schedule: {0}")]
    Infeasible(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("scalarization weights must be non-negative and not both zero (alpha={alpha}, beta={beta})")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("action {0} is not feasible in the current state")]
    InfeasibleAction(String),
    #[error("episode is already done")]
    EpisodeDone,
    #[error("step budget of {0} exceeded before the episode finished")]
    StepBudget(usize),
    #[error("ineligible pair: job {job} on machine {machine}")]
    Ineligible { job: usize, machine: usize },
    #[error("no feasible action")]
    NoFeasibleAction,
    #[error("instance too large for exhaustive search: n={n} (max {max_n}), m={m} (max {max_m})")]
    TooLarge { n: usize, m: usize, max_n: usize, max_m: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
