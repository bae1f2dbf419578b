//! ATCSR_Rm composite dispatching rule (Apparent Tardiness Cost with Setups
//! and Ready times, multi-machine variant).
//!
//! At each epoch every (visible job, idle eligible machine) pair is scored
//!
//! ```text
//! I = w/p · exp(−max(d − p − max(t, r), 0) / (k1·p̄)) · exp(−s / (k2·s̄)) · exp(−max(r − t, 0) / (k3·p̄))
//! ```
//!
//! where `p̄`, `s̄` are the mean processing and setup times over the scored
//! pairs. The global argmax is dispatched; if it belongs to a job that has
//! not been released yet the rule waits for the next event.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::{rollout, Action, ActionSet, JobStatus, MachineStatus, Policy, RewardConfig, SchedulingEnv};
use crate::error::{CoreError, Result};
use crate::graph::lookahead;
use crate::problem::{ObjectiveValues, ProblemInstance, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtcsrParams {
    /// Slack scaling.
    pub k1: f64,
    /// Setup scaling.
    pub k2: f64,
    /// Ready-time scaling.
    pub k3: f64,
}

impl Default for AtcsrParams {
    fn default() -> Self {
        AtcsrParams { k1: 2.0, k2: 0.5, k3: 1.0 }
    }
}

impl AtcsrParams {
    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.k3].iter().all(|k| *k > 0.0 && k.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::InvalidParams(format!("ATCSR scaling parameters must be positive: {self:?}")))
        }
    }
}

/// Queue statistics shared by all pairs scored at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueContext {
    pub mean_processing: f64,
    pub mean_setup: f64,
}

/// Priority of `job` on `machine` at time `t` when the machine last processed `prev`.
pub fn atcsr_index(
    inst: &ProblemInstance,
    job: usize,
    machine: usize,
    prev: Option<usize>,
    t: i64,
    ctx: &QueueContext,
    params: &AtcsrParams,
) -> Result<f64> {
    if !inst.is_eligible(job, machine) {
        return Err(CoreError::Ineligible { job, machine });
    }
    let p = inst.p(job, machine) as f64;
    let s = inst.s(prev, job, machine) as f64;
    let r = inst.release[job];
    let slack = (inst.due[job] as f64 - p - t.max(r) as f64).max(0.0);
    let ready = (r - t).max(0) as f64;
    let slack_factor = (-slack / (params.k1 * ctx.mean_processing)).exp();
    let setup_factor = if ctx.mean_setup > 0.0 { (-s / (params.k2 * ctx.mean_setup)).exp() } else { 1.0 };
    let ready_factor = (-ready / (params.k3 * ctx.mean_processing)).exp();
    Ok(inst.weight[job] as f64 / p * slack_factor * setup_factor * ready_factor)
}

/// Candidate pairs considered at the current epoch: queued or soon-released
/// jobs on idle eligible machines, job-major ascending.
fn candidates(env: &SchedulingEnv<'_>) -> Vec<(usize, usize)> {
    let inst = env.instance();
    let st = env.state();
    let horizon = st.now + lookahead(inst);
    let mut out = Vec::new();
    for j in 0..inst.n {
        let visible = match st.jobs[j].status {
            JobStatus::Queued => true,
            JobStatus::Unreleased => inst.release[j] <= horizon,
            _ => false,
        };
        if !visible {
            continue;
        }
        for &k in &inst.eligible[j] {
            if st.machines[k].status(st.now) == MachineStatus::Idle {
                out.push((j, k));
            }
        }
    }
    out
}

/// Picks the next action under the rule.
pub fn dispatch(env: &SchedulingEnv<'_>, params: &AtcsrParams) -> Result<Action> {
    let feasible = env.feasible_actions()?;
    dispatch_with(env, &feasible, params)
}

fn dispatch_with(env: &SchedulingEnv<'_>, feasible: &ActionSet, params: &AtcsrParams) -> Result<Action> {
    if feasible.actions.is_empty() {
        return Err(CoreError::NoFeasibleAction);
    }
    let inst = env.instance();
    let st = env.state();
    let pairs = candidates(env);
    if pairs.is_empty() {
        return Ok(feasible.actions[0]);
    }
    let count = pairs.len() as f64;
    let ctx = QueueContext {
        mean_processing: pairs.iter().map(|&(j, k)| inst.p(j, k) as f64).sum::<f64>() / count,
        mean_setup: pairs
            .iter()
            .map(|&(j, k)| inst.s(st.machines[k].last_job, j, k) as f64)
            .sum::<f64>()
            / count,
    };
    let mut best: Option<(f64, usize, usize)> = None;
    for &(j, k) in &pairs {
        let index = atcsr_index(inst, j, k, st.machines[k].last_job, st.now, &ctx, params)?;
        // Strict comparison keeps the lowest (job, machine) on ties.
        if best.map_or(true, |(b, _, _)| index > b) {
            best = Some((index, j, k));
        }
    }
    let (_, job, machine) = best.expect("non-empty candidates");
    let action = Action::Assign { job, machine };
    if feasible.contains(&action) {
        Ok(action)
    } else if feasible.wait {
        Ok(Action::Wait)
    } else {
        Ok(feasible.actions[0])
    }
}

/// [`Policy`] adapter for the rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct AtcsrPolicy {
    pub params: AtcsrParams,
}

impl Policy for AtcsrPolicy {
    fn choose(&mut self, env: &SchedulingEnv<'_>, actions: &ActionSet) -> Action {
        dispatch_with(env, actions, &self.params).expect("epochs always offer an action")
    }
}

#[derive(Debug, Clone)]
pub struct AtcsrSolution {
    pub schedule: Schedule,
    pub objectives: ObjectiveValues,
    pub elapsed: Duration,
}

/// Step budget for any episode of `inst` driven by a policy that waits only
/// for pending events.
pub fn episode_step_budget(inst: &ProblemInstance) -> usize {
    3 * inst.n + 16
}

pub fn solve_atcsr(inst: &ProblemInstance, params: &AtcsrParams) -> Result<AtcsrSolution> {
    params.validate()?;
    let started = Instant::now();
    let mut policy = AtcsrPolicy { params: *params };
    let trace = rollout(inst, RewardConfig::default(), &mut policy, episode_step_budget(inst))?;
    Ok(AtcsrSolution { schedule: trace.schedule, objectives: trace.objectives, elapsed: started.elapsed() })
}
