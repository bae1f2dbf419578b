//! Discrete-event simulation of the scheduling problem as an MDP.
//!
//! The agent is consulted only at decision epochs: instants where at least
//! one queued job can be assigned to an idle eligible machine. Everything
//! between epochs (releases, completions) is processed automatically.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::problem::{validate_instance, JobTiming, ObjectiveValues, ProblemInstance, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Assign { job: usize, machine: usize },
    Wait,
}

impl Action {
    /// Flat index: `job·m + machine` for assignments, `n·m` for Wait.
    pub fn index(&self, n: usize, m: usize) -> usize {
        match *self {
            Action::Assign { job, machine } => job * m + machine,
            Action::Wait => n * m,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Assign { job, machine } => write!(f, "assign(job {job}, machine {machine})"),
            Action::Wait => write!(f, "wait"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MachineStatus {
    Idle,
    SettingUp,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobStatus {
    Unreleased,
    Queued,
    Assigned,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    /// Last job set up on the machine; `None` is the idle pseudo-job.
    pub last_job: Option<usize>,
    pub setup_start: i64,
    /// End of the most recent setup, i.e. processing start of `last_job`.
    pub setup_end: i64,
    pub free_at: i64,
}

impl MachineState {
    pub fn status(&self, now: i64) -> MachineStatus {
        if self.free_at <= now {
            MachineStatus::Idle
        } else if now < self.setup_end {
            MachineStatus::SettingUp
        } else {
            MachineStatus::Busy
        }
    }

    /// Time spent in the current status.
    pub fn time_in_status(&self, now: i64) -> i64 {
        match self.status(now) {
            MachineStatus::Idle => now - self.free_at,
            MachineStatus::SettingUp => now - self.setup_start,
            MachineStatus::Busy => now - self.setup_end,
        }
    }

    /// Time spent holding the current setup configuration.
    pub fn time_in_setup(&self, now: i64) -> i64 {
        (now - self.setup_end).max(0)
    }

    /// Setup-configuration id: 0 for the idle pseudo-job, `j + 1` for job `j`.
    pub fn setup_id(&self) -> usize {
        self.last_job.map_or(0, |j| j + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobState {
    pub status: JobStatus,
    pub timing: Option<JobTiming>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Completion(usize),
    Release(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: i64,
    kind: EventKind,
}

/// Simulation state at a decision epoch.
#[derive(Debug, Clone, Default)]
pub struct EnvState {
    pub now: i64,
    pub machines: Vec<MachineState>,
    pub jobs: Vec<JobState>,
    /// Committed job order per machine.
    pub sequences: Vec<Vec<usize>>,
    pub twt: i64,
    pub tst: i64,
    events: BinaryHeap<Reverse<Event>>,
    unassigned: usize,
    done: bool,
}

impl EnvState {
    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn next_event_time(&self) -> Option<i64> {
        self.events.peek().map(|Reverse(e)| e.time)
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn unassigned(&self) -> usize {
        self.unassigned
    }

    pub fn objectives(&self) -> ObjectiveValues {
        ObjectiveValues { twt: self.twt, tst: self.tst }
    }
}

/// Reward weights. `time_scale` multiplies every reward; 1 keeps rewards in
/// raw integer time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub time_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { alpha: 1.0, beta: 1.0, time_scale: 1.0 }
    }
}

impl RewardConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        RewardConfig { alpha, beta, time_scale: 1.0 }
    }

    /// Same weights with rewards expressed in units of the instance's mean
    /// processing time.
    pub fn scaled_by_mean_processing(self, inst: &ProblemInstance) -> Self {
        let p_bar = inst.mean_processing();
        let time_scale = if p_bar > 0.0 { 1.0 / p_bar } else { 1.0 };
        RewardConfig { time_scale, ..self }
    }
}

/// Immediate reward for committing a job: `−α·ΔTWT − β·s`.
pub fn reward(delta_twt: f64, setup: f64, alpha: f64, beta: f64) -> f64 {
    -alpha * delta_twt - beta * setup
}

/// Feasible actions at an epoch plus the dense mask over all `n·m` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSet {
    /// Feasible assignments (job-major, ascending), then Wait if allowed.
    pub actions: Vec<Action>,
    pub mask: Vec<bool>,
    pub wait: bool,
}

impl ActionSet {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions.iter().filter_map(|a| match *a {
            Action::Assign { job, machine } => Some((job, machine)),
            Action::Wait => None,
        })
    }

    pub fn contains(&self, action: &Action) -> bool {
        self.actions.contains(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub delta_twt: i64,
    pub setup: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One simulated episode over a borrowed instance.
#[derive(Debug, Clone)]
pub struct SchedulingEnv<'a> {
    inst: &'a ProblemInstance,
    reward: RewardConfig,
    state: EnvState,
}

impl<'a> SchedulingEnv<'a> {
    pub fn reset(inst: &'a ProblemInstance, reward: RewardConfig) -> Result<Self> {
        let issues = validate_instance(inst);
        if !issues.is_empty() {
            let text: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
            return Err(CoreError::InvalidInstance(text.join("; ")));
        }
        let now = inst.release.iter().copied().min().unwrap_or(0);
        let machine = MachineState { last_job: None, setup_start: 0, setup_end: 0, free_at: 0 };
        let mut events = BinaryHeap::new();
        let jobs = (0..inst.n)
            .map(|j| {
                let status = if inst.release[j] <= now {
                    JobStatus::Queued
                } else {
                    events.push(Reverse(Event { time: inst.release[j], kind: EventKind::Release(j) }));
                    JobStatus::Unreleased
                };
                JobState { status, timing: None }
            })
            .collect();
        let state = EnvState {
            now,
            machines: vec![machine; inst.m],
            jobs,
            sequences: vec![Vec::new(); inst.m],
            twt: 0,
            tst: 0,
            events,
            unassigned: inst.n,
            done: false,
        };
        let mut env = SchedulingEnv { inst, reward, state };
        env.settle();
        Ok(env)
    }

    /// Continues an episode from a state previously taken out with
    /// [`SchedulingEnv::into_state`] on the same instance.
    pub fn resume(inst: &'a ProblemInstance, reward: RewardConfig, state: EnvState) -> Self {
        debug_assert_eq!(state.jobs.len(), inst.n);
        debug_assert_eq!(state.machines.len(), inst.m);
        SchedulingEnv { inst, reward, state }
    }

    pub fn into_state(self) -> EnvState {
        self.state
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.inst
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn reward_config(&self) -> RewardConfig {
        self.reward
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    fn pair_feasible(&self, job: usize, machine: usize) -> bool {
        self.state.jobs[job].status == JobStatus::Queued
            && self.state.machines[machine].free_at <= self.state.now
            && self.inst.is_eligible(job, machine)
    }

    fn has_feasible_pair(&self) -> bool {
        (0..self.inst.n).any(|j| {
            self.state.jobs[j].status == JobStatus::Queued
                && self.inst.eligible[j].iter().any(|&k| self.state.machines[k].free_at <= self.state.now)
        })
    }

    pub fn feasible_actions(&self) -> Result<ActionSet> {
        if self.state.done {
            return Err(CoreError::EpisodeDone);
        }
        let (n, m) = (self.inst.n, self.inst.m);
        let mut mask = vec![false; n * m];
        let mut actions = Vec::new();
        for job in 0..n {
            if self.state.jobs[job].status != JobStatus::Queued {
                continue;
            }
            for &machine in &self.inst.eligible[job] {
                if self.state.machines[machine].free_at <= self.state.now {
                    mask[job * m + machine] = true;
                }
            }
            for machine in 0..m {
                if mask[job * m + machine] {
                    actions.push(Action::Assign { job, machine });
                }
            }
        }
        let wait = !self.state.events.is_empty();
        if wait {
            actions.push(Action::Wait);
        }
        Ok(ActionSet { actions, mask, wait })
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.state.done {
            return Err(CoreError::EpisodeDone);
        }
        let result = match action {
            Action::Assign { job, machine } => {
                if job >= self.inst.n || machine >= self.inst.m || !self.pair_feasible(job, machine) {
                    return Err(CoreError::InfeasibleAction(action.to_string()));
                }
                let inst = self.inst;
                let st = &mut self.state;
                let mach = &mut st.machines[machine];
                let setup = inst.s(mach.last_job, job, machine);
                let setup_start = st.now;
                let start = setup_start + setup;
                let completion = start + inst.p(job, machine);
                *mach = MachineState { last_job: Some(job), setup_start, setup_end: start, free_at: completion };
                st.jobs[job] = JobState {
                    status: JobStatus::Assigned,
                    timing: Some(JobTiming { machine, setup_start, start, completion }),
                };
                st.sequences[machine].push(job);
                st.unassigned -= 1;
                let delta_twt = inst.weight[job] * (completion - inst.due[job]).max(0);
                st.twt += delta_twt;
                st.tst += setup;
                st.events.push(Reverse(Event { time: completion, kind: EventKind::Completion(job) }));
                let r = reward(delta_twt as f64, setup as f64, self.reward.alpha, self.reward.beta);
                StepResult { reward: r * self.reward.time_scale, done: false, info: StepInfo { delta_twt, setup } }
            }
            Action::Wait => {
                let Some(next) = self.state.next_event_time() else {
                    return Err(CoreError::InfeasibleAction(action.to_string()));
                };
                self.advance_to(next);
                StepResult { reward: 0.0, done: false, info: StepInfo { delta_twt: 0, setup: 0 } }
            }
        };
        self.settle();
        Ok(StepResult { done: self.state.done, ..result })
    }

    fn advance_to(&mut self, t: i64) {
        let st = &mut self.state;
        debug_assert!(t >= st.now);
        st.now = t;
        while let Some(Reverse(ev)) = st.events.peek().copied() {
            if ev.time > t {
                break;
            }
            st.events.pop();
            match ev.kind {
                EventKind::Release(j) => st.jobs[j].status = JobStatus::Queued,
                EventKind::Completion(j) => st.jobs[j].status = JobStatus::Done,
            }
        }
    }

    /// Processes events until the next decision epoch, or to the end of the
    /// episode once every job is committed.
    fn settle(&mut self) {
        loop {
            if self.state.unassigned == 0 {
                while let Some(t) = self.state.next_event_time() {
                    self.advance_to(t);
                }
                self.state.done = true;
                return;
            }
            if self.has_feasible_pair() {
                return;
            }
            let next = self
                .state
                .next_event_time()
                .expect("unassigned jobs with no epoch imply a pending event");
            self.advance_to(next);
        }
    }

    /// The schedule realized so far (complete once the episode is done).
    pub fn schedule(&self) -> Schedule {
        Schedule {
            sequences: self.state.sequences.clone(),
            timings: self.state.jobs.iter().map(|j| j.timing).collect(),
        }
    }
}

/// Chooses an action at every decision epoch.
pub trait Policy {
    fn choose(&mut self, env: &SchedulingEnv<'_>, actions: &ActionSet) -> Action;
}

impl<F> Policy for F
where
    F: FnMut(&SchedulingEnv<'_>, &ActionSet) -> Action,
{
    fn choose(&mut self, env: &SchedulingEnv<'_>, actions: &ActionSet) -> Action {
        self(env, actions)
    }
}

/// Uniform choice among the feasible actions, Wait included.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn choose(&mut self, _env: &SchedulingEnv<'_>, actions: &ActionSet) -> Action {
        *actions.actions.choose(&mut self.rng).expect("epochs always offer an action")
    }
}

/// One decision in an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub action: Action,
    pub reward: f64,
    pub now: i64,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    /// State at each decision, before the action was applied.
    pub states: Vec<EnvState>,
    pub records: Vec<TraceRecord>,
    pub objectives: ObjectiveValues,
    pub schedule: Schedule,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// JSON-lines export, one record per step.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs `policy` from reset until the episode ends.
pub fn rollout<P: Policy + ?Sized>(
    inst: &ProblemInstance,
    reward: RewardConfig,
    policy: &mut P,
    max_steps: usize,
) -> Result<EpisodeTrace> {
    let mut env = SchedulingEnv::reset(inst, reward)?;
    let mut states = Vec::new();
    let mut records = Vec::new();
    while !env.is_done() {
        if records.len() >= max_steps {
            return Err(CoreError::StepBudget(max_steps));
        }
        let actions = env.feasible_actions()?;
        let action = policy.choose(&env, &actions);
        let now = env.state().now;
        states.push(env.state().clone());
        let res = env.step(action)?;
        records.push(TraceRecord { t: records.len(), action, reward: res.reward, now });
    }
    Ok(EpisodeTrace {
        states,
        records,
        objectives: env.state().objectives(),
        schedule: env.schedule(),
    })
}
