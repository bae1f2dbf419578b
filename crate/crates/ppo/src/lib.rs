//! Proximal policy optimization of the graph scheduling policy: advantage
//! estimation, the clipped objective, the training loop and greedy
//! evaluation.

pub mod error;
pub mod eval;
pub mod gae;
pub mod loss;
pub mod train;

pub use error::{PpoError, Result};
pub use eval::{evaluate_policy, solve_greedy, EvalReport, EvalRow};
pub use gae::compute_gae;
pub use loss::{clipped_surrogate, ppo_loss, LossConfig, LossOutput, Transition};
pub use train::{curve_csv, initial_params, score, train, train_with, CurveRow, EpisodeStats, InstanceSampler, TrainConfig, TrainOutput};
