//! Core of the UPMSP laboratory: the problem model, the seeded instance
//! generator, the discrete-event environment with its graph view, and the
//! three non-learning solvers (ATCSR_Rm dispatching, genetic algorithm,
//! exhaustive oracle).

pub mod atcsr;
pub mod env;
pub mod error;
pub mod exact;
pub mod ga;
pub mod graph;
pub mod instance_gen;
pub mod problem;

pub use env::{Action, ActionSet, EnvState, Policy, RandomPolicy, RewardConfig, SchedulingEnv, StepResult};
pub use error::{CoreError, Result};
pub use graph::{build_graph, global_features, HeteroGraph};
pub use instance_gen::{generate_instance, GenParams};
pub use problem::{
    compute_objectives, scalarize, validate_instance, validate_schedule, ObjectiveValues, ProblemInstance,
    Schedule,
};
