//! Uniform entry point to every solution method.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use upmsp_core::atcsr::{episode_step_budget, solve_atcsr, AtcsrParams};
use upmsp_core::env::rollout;
use upmsp_core::exact::solve_exact_scalarized;
use upmsp_core::ga::{run_ga, Fitness, GaParams};
use upmsp_core::{ObjectiveValues, ProblemInstance, RandomPolicy, RewardConfig, Schedule};
use upmsp_nn::PolicyParams;
use upmsp_ppo::solve_greedy;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Atcsr,
    Ga,
    Exact,
    Ppo,
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Atcsr, Method::Ga, Method::Exact, Method::Ppo, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Atcsr => "atcsr",
            Method::Ga => "ga",
            Method::Exact => "exact",
            Method::Ppo => "ppo",
            Method::Random => "random",
        }
    }

    /// Whether repeated runs with different seeds can differ.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Ga | Method::Random)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| BenchError::Invalid(format!("unknown method {s:?} (expected atcsr, ga, exact, ppo or random)")))
    }
}

/// Parses a comma-separated method list, keeping order and dropping repeats.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Invalid("no methods given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub alpha: f64,
    pub beta: f64,
    pub atcsr: AtcsrParams,
    /// `alpha_fitness` of this is replaced when `match_weights` is set.
    pub ga: GaParams,
    /// Give the GA the fitness weight that ranks schedules like
    /// `alpha·twt + beta·tst`.
    pub match_weights: bool,
    pub policy: Option<PolicyParams>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            alpha: 1.0,
            beta: 1.0,
            atcsr: AtcsrParams::default(),
            ga: GaParams::default(),
            match_weights: true,
            policy: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub schedule: Schedule,
    pub objectives: ObjectiveValues,
    pub elapsed: Duration,
}

/// Solves `inst` with `method`; `seed` drives the stochastic methods.
pub fn solve(inst: &ProblemInstance, method: Method, opts: &SolveOptions, seed: u64) -> Result<Solved> {
    let started = Instant::now();
    let (schedule, objectives) = match method {
        Method::Atcsr => {
            let s = solve_atcsr(inst, &opts.atcsr)?;
            (s.schedule, s.objectives)
        }
        Method::Ga => {
            let mut params = GaParams { seed, ..opts.ga.clone() };
            if opts.match_weights {
                let reference = solve_atcsr(inst, &AtcsrParams::default())?.objectives;
                params.alpha_fitness = Fitness::alpha_for_weights(opts.alpha, opts.beta, reference);
            }
            let r = run_ga(inst, &params)?;
            (r.schedule, r.objectives)
        }
        Method::Exact => {
            let s = solve_exact_scalarized(inst, opts.alpha, opts.beta)?;
            (s.schedule, s.objectives)
        }
        Method::Ppo => {
            let policy = opts.policy.as_ref().ok_or(BenchError::MissingCheckpoint)?;
            solve_greedy(policy, inst)?
        }
        Method::Random => {
            let mut policy = RandomPolicy::new(seed);
            let t = rollout(inst, RewardConfig::default(), &mut policy, episode_step_budget(inst))?;
            (t.schedule, t.objectives)
        }
    };
    Ok(Solved { schedule, objectives, elapsed: started.elapsed() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sa".parse::<Method>().is_err());
        assert_eq!(parse_methods("ga, atcsr,ga").unwrap(), vec![Method::Ga, Method::Atcsr]);
        assert!(parse_methods(",").is_err());
    }
}
