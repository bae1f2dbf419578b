//! Greedy rollouts of a trained policy.

use std::time::{Duration, Instant};

use upmsp_core::atcsr::episode_step_budget;
use upmsp_core::{
    build_graph, validate_schedule, CoreError, ObjectiveValues, ProblemInstance, RewardConfig, Schedule,
    SchedulingEnv,
};
use upmsp_nn::PolicyParams;

use crate::error::Result;
use crate::train::score;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs one episode choosing the most probable action at every epoch.
pub fn solve_greedy(params: &PolicyParams, inst: &ProblemInstance) -> Result<(Schedule, ObjectiveValues)> {
    let mut env = SchedulingEnv::reset(inst, RewardConfig::default())?;
    let budget = episode_step_budget(inst);
    let mut steps = 0;
    while !env.is_done() {
        if steps >= budget {
            return Err(CoreError::StepBudget(budget).into());
        }
        let actions = env.feasible_actions()?;
        let graph = build_graph(inst, env.state());
        let (log_probs, _) = score(params, &graph, &actions)?;
        env.step(actions.actions[argmax(&log_probs)])?;
        steps += 1;
    }
    Ok((env.schedule(), env.state().objectives()))
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub schedule: Schedule,
    pub objectives: ObjectiveValues,
    pub scalarized: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_twt: f64,
    pub mean_tst: f64,
    pub mean_scalarized: f64,
    pub mean_ms: f64,
}

/// Greedy evaluation over a set of instances. Every schedule is re-validated;
/// a violation is reported as an error.
pub fn evaluate_policy(params: &PolicyParams, instances: &[ProblemInstance], alpha: f64, beta: f64) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(instances.len());
    for inst in instances {
        let start = Instant::now();
        let (schedule, objectives) = solve_greedy(params, inst)?;
        let elapsed = start.elapsed();
        if let Some(v) = validate_schedule(inst, &schedule).first() {
            return Err(CoreError::Infeasible(v.to_string()).into());
        }
        let scalarized = objectives.scalarized(alpha, beta)?;
        rows.push(EvalRow { schedule, objectives, scalarized, elapsed });
    }
    let k = rows.len().max(1) as f64;
    Ok(EvalReport {
        mean_twt: rows.iter().map(|r| r.objectives.twt as f64).sum::<f64>() / k,
        mean_tst: rows.iter().map(|r| r.objectives.tst as f64).sum::<f64>() / k,
        mean_scalarized: rows.iter().map(|r| r.scalarized).sum::<f64>() / k,
        mean_ms: rows.iter().map(|r| r.elapsed.as_secs_f64() * 1e3).sum::<f64>() / k,
        rows,
    })
}
