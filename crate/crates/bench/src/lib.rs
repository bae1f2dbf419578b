//! Benchmark harness: runs the solution methods over instance suites,
//! aggregates objectives and timings, tests paired differences and reports
//! Pareto dominance between methods.

pub mod bench;
pub mod error;
pub mod methods;
pub mod pareto;
pub mod stats;

pub use bench::{run_benchmark, summary_csv, BenchResults, MethodSummary, ResultRow};
pub use error::{BenchError, Result};
pub use methods::{parse_methods, solve, Method, SolveOptions, Solved};
pub use pareto::{dominates, pareto_report, MethodPoint, ParetoReport};
pub use stats::{paired_t_test, TTest};
