//! Heterogeneous graph snapshot of an [`EnvState`].
//!
//! Node types: visible jobs, machines, setup configurations. A setup
//! configuration is identified with the job last processed (`0` = idle
//! pseudo-job, `j + 1` = job `j`); only configurations that are a machine's
//! current state or a visible job's requirement get a node.
//!
//! Time features are differenced against `now` and divided by the instance's
//! mean processing time `p̄`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, JobStatus, MachineStatus};
use crate::error::Result;
use crate::problem::ProblemInstance;

pub const GRAPH_VERSION: u32 = 1;

pub const JOB_FEATURES: usize = 5;
pub const MACHINE_FEATURES: usize = 6;
pub const SETUP_FEATURES: usize = 2;
pub const JM_FEATURES: usize = 3;
pub const MS_FEATURES: usize = 1;
pub const JS_FEATURES: usize = 1;
pub const SM_FEATURES: usize = 1;
pub const GLOBAL_FEATURES: usize = 9;

const WEIGHT_SCALE: f64 = 10.0;
const SLACK_CLIP: f64 = 4.0;
const DURATION_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobNode {
    pub job: usize,
    /// `[w, mean eligible p, d − now, max(r − now, 0), min setup over idle machines]`
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineNode {
    pub machine: usize,
    /// `[idle, setting up, busy, free-at − now, setup id, time in status]`
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupNode {
    pub id: usize,
    /// `[id / (n + 1), is idle configuration]`
    pub x: Vec<f64>,
}

/// Endpoints are positions in the corresponding node lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Nodes {
    pub jobs: Vec<JobNode>,
    pub machines: Vec<MachineNode>,
    pub setups: Vec<SetupNode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Edges {
    /// job → machine: `[p_jk, current setup estimate, eligible]`
    pub jm: Vec<Edge>,
    /// machine → setup: `[time in setup]`
    pub ms: Vec<Edge>,
    /// job → setup: `[w]`
    pub js: Vec<Edge>,
    /// setup → machine: `[transition cost]`
    pub sm: Vec<Edge>,
}

/// Scale factors needed to recover raw values from the features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub now: i64,
    pub p_bar: f64,
    pub horizon: i64,
    pub raw_globals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub v: u32,
    pub nodes: Nodes,
    pub edges: Edges,
    /// Normalized global features, same field order as [`GlobalFeatures`].
    pub globals: Vec<f64>,
    pub meta: GraphMeta,
}

impl HeteroGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Position of job `job` among the job nodes, if visible.
    pub fn job_position(&self, job: usize) -> Option<usize> {
        self.nodes.jobs.binary_search_by_key(&job, |n| n.job).ok()
    }

    /// JM edge for a pair, if present.
    pub fn jm_edge(&self, job_pos: usize, machine: usize) -> Option<&Edge> {
        self.edges.jm.iter().find(|e| e.src == job_pos && e.dst == machine)
    }

    pub fn features_finite(&self) -> bool {
        let nodes = self.nodes.jobs.iter().map(|n| &n.x)
            .chain(self.nodes.machines.iter().map(|n| &n.x))
            .chain(self.nodes.setups.iter().map(|n| &n.x));
        let edges = [&self.edges.jm, &self.edges.ms, &self.edges.js, &self.edges.sm]
            .into_iter()
            .flat_map(|es| es.iter().map(|e| &e.x));
        nodes.chain(edges).chain(std::iter::once(&self.globals)).all(|x| x.iter().all(|v| v.is_finite()))
    }
}

/// Upper bound on the makespan of any episode, used to normalize elapsed time.
pub fn episode_horizon(inst: &ProblemInstance) -> i64 {
    let max_release = inst.release.iter().copied().max().unwrap_or(0);
    let max_setup_into = |j: usize| {
        inst.setup.iter().flat_map(|plane| plane[j].iter().copied()).max().unwrap_or(0)
    };
    let work: i64 = (0..inst.n)
        .map(|j| inst.processing[j].iter().copied().max().unwrap_or(0) + max_setup_into(j))
        .sum();
    (max_release + work).max(1)
}

/// How far ahead unreleased jobs are visible: the mean processing time, rounded.
pub fn lookahead(inst: &ProblemInstance) -> i64 {
    inst.mean_processing().round() as i64
}

fn is_visible(inst: &ProblemInstance, state: &EnvState, job: usize) -> bool {
    match state.jobs[job].status {
        JobStatus::Queued => true,
        JobStatus::Unreleased => inst.release[job] <= state.now + lookahead(inst),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalFeatures {
    pub wip: usize,
    pub arrivals_soon: usize,
    pub tardy: usize,
    pub mean_flow_time: f64,
    pub tst: i64,
    pub idle_machines: usize,
    pub setting_up: usize,
    pub now: i64,
    pub elapsed: f64,
}

impl GlobalFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.wip as f64,
            self.arrivals_soon as f64,
            self.tardy as f64,
            self.mean_flow_time,
            self.tst as f64,
            self.idle_machines as f64,
            self.setting_up as f64,
            self.now as f64,
            self.elapsed,
        ]
    }

    /// Scale-free version fed to the encoder.
    pub fn normalized(&self, inst: &ProblemInstance) -> Vec<f64> {
        let n = inst.n.max(1) as f64;
        let m = inst.m.max(1) as f64;
        let p_bar = inst.mean_processing().max(1.0);
        vec![
            self.wip as f64 / n,
            self.arrivals_soon as f64 / n,
            self.tardy as f64 / n,
            (self.mean_flow_time / p_bar).min(DURATION_CLIP),
            self.tst as f64 / (n * p_bar),
            self.idle_machines as f64 / m,
            self.setting_up as f64 / m,
            (self.now as f64 / p_bar).min(DURATION_CLIP * n) / n,
            self.elapsed,
        ]
    }
}

/// Summary statistics of the state, in raw units.
pub fn global_features(inst: &ProblemInstance, state: &EnvState) -> GlobalFeatures {
    let now = state.now;
    let mut g = GlobalFeatures { now, tst: state.tst, ..Default::default() };
    let mut flow_total = 0i64;
    let mut completed = 0usize;
    for (j, job) in state.jobs.iter().enumerate() {
        match job.status {
            JobStatus::Queued => {
                g.wip += 1;
                if now > inst.due[j] {
                    g.tardy += 1;
                }
            }
            JobStatus::Unreleased => {
                if is_visible(inst, state, j) {
                    g.arrivals_soon += 1;
                }
            }
            JobStatus::Assigned | JobStatus::Done => {
                let t = job.timing.expect("committed jobs carry timing");
                if t.completion > inst.due[j] {
                    g.tardy += 1;
                }
                if job.status == JobStatus::Done {
                    flow_total += t.completion - inst.release[j];
                    completed += 1;
                }
            }
        }
    }
    if completed > 0 {
        g.mean_flow_time = flow_total as f64 / completed as f64;
    }
    for m in &state.machines {
        match m.status(now) {
            MachineStatus::Idle => g.idle_machines += 1,
            MachineStatus::SettingUp => g.setting_up += 1,
            MachineStatus::Busy => {}
        }
    }
    g.elapsed = (now as f64 / episode_horizon(inst) as f64).clamp(0.0, 1.0);
    g
}

pub fn build_graph(inst: &ProblemInstance, state: &EnvState) -> HeteroGraph {
    let now = state.now;
    let p_bar = inst.mean_processing().max(1.0);
    let scale = |t: i64| t as f64 / p_bar;
    let machines = &state.machines;

    let visible: Vec<usize> = (0..inst.n).filter(|&j| is_visible(inst, state, j)).collect();

    let mut setup_ids: Vec<usize> = machines
        .iter()
        .map(|m| m.setup_id())
        .chain(visible.iter().map(|&j| j + 1))
        .collect();
    setup_ids.sort_unstable();
    setup_ids.dedup();
    let setup_pos = |id: usize| setup_ids.binary_search(&id).expect("setup node exists");

    let jobs: Vec<JobNode> = visible
        .iter()
        .map(|&j| {
            let idle_min = inst.eligible[j]
                .iter()
                .filter(|&&k| machines[k].status(now) == MachineStatus::Idle)
                .map(|&k| inst.s(machines[k].last_job, j, k))
                .min();
            let min_setup = idle_min.unwrap_or_else(|| {
                inst.eligible[j].iter().map(|&k| inst.s(machines[k].last_job, j, k)).min().unwrap_or(0)
            });
            JobNode {
                job: j,
                x: vec![
                    inst.weight[j] as f64 / WEIGHT_SCALE,
                    inst.mean_eligible_processing(j) / p_bar,
                    scale(inst.due[j] - now).clamp(-SLACK_CLIP, SLACK_CLIP),
                    scale((inst.release[j] - now).max(0)),
                    scale(min_setup),
                ],
            }
        })
        .collect();

    let id_scale = (inst.n + 1) as f64;
    let machine_nodes: Vec<MachineNode> = machines
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let status = m.status(now);
            let onehot = |s: MachineStatus| if status == s { 1.0 } else { 0.0 };
            MachineNode {
                machine: k,
                x: vec![
                    onehot(MachineStatus::Idle),
                    onehot(MachineStatus::SettingUp),
                    onehot(MachineStatus::Busy),
                    scale((m.free_at - now).max(0)),
                    m.setup_id() as f64 / id_scale,
                    scale(m.time_in_status(now)).min(DURATION_CLIP),
                ],
            }
        })
        .collect();

    let setups: Vec<SetupNode> = setup_ids
        .iter()
        .map(|&id| SetupNode { id, x: vec![id as f64 / id_scale, if id == 0 { 1.0 } else { 0.0 }] })
        .collect();

    let mut edges = Edges::default();
    for (pos, &j) in visible.iter().enumerate() {
        for &k in &inst.eligible[j] {
            let s = inst.s(machines[k].last_job, j, k);
            edges.jm.push(Edge { src: pos, dst: k, x: vec![scale(inst.p(j, k)), scale(s), 1.0] });
        }
    }
    for (k, m) in machines.iter().enumerate() {
        edges.ms.push(Edge {
            src: k,
            dst: setup_pos(m.setup_id()),
            x: vec![scale(m.time_in_setup(now)).min(DURATION_CLIP)],
        });
    }
    for (pos, &j) in visible.iter().enumerate() {
        edges.js.push(Edge { src: pos, dst: setup_pos(j + 1), x: vec![inst.weight[j] as f64 / WEIGHT_SCALE] });
    }
    for &j in &visible {
        let src = setup_pos(j + 1);
        for &k in &inst.eligible[j] {
            edges.sm.push(Edge { src, dst: k, x: vec![scale(inst.s(machines[k].last_job, j, k))] });
        }
    }

    let g = global_features(inst, state);
    HeteroGraph {
        v: GRAPH_VERSION,
        nodes: Nodes { jobs, machines: machine_nodes, setups },
        edges,
        globals: g.normalized(inst),
        meta: GraphMeta { now, p_bar, horizon: episode_horizon(inst), raw_globals: g.to_vec() },
    }
}

/// Writes snapshots as JSON lines.
pub fn write_graph_stream<'g, W: Write>(
    graphs: impl IntoIterator<Item = &'g HeteroGraph>,
    mut out: W,
) -> std::io::Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, RewardConfig, SchedulingEnv};
    use crate::problem::tests::instance_a;
    use crate::problem::InstanceMeta;

    fn three_machine_instance() -> ProblemInstance {
        ProblemInstance {
            n: 3,
            m: 3,
            processing: vec![vec![4, 5, 6]; 3],
            release: vec![0, 0, 0],
            due: vec![10, 12, 14],
            weight: vec![1, 2, 3],
            setup: vec![vec![vec![2; 3]; 3]; 4],
            eligible: vec![vec![0, 2], vec![0, 1, 2], vec![1]],
            meta: InstanceMeta::default(),
        }
    }

    #[test]
    fn job_machine_edges_follow_eligibility() {
        let mut inst = three_machine_instance();
        inst.n = 1;
        inst.processing.truncate(1);
        inst.release.truncate(1);
        inst.due.truncate(1);
        inst.weight.truncate(1);
        inst.eligible.truncate(1);
        inst.setup = vec![vec![vec![2; 3]]; 2];
        let env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        let g = build_graph(&inst, env.state());
        assert_eq!(g.edges.jm.len(), 2);
        assert_eq!(g.edges.jm.iter().map(|e| e.dst).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn fresh_reset_shares_idle_setup_node() {
        let inst = three_machine_instance();
        let env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        let g = build_graph(&inst, env.state());
        assert_eq!(g.edges.ms.len(), 3);
        assert!(g.edges.ms.iter().all(|e| g.nodes.setups[e.dst].id == 0));
        assert_eq!(g.nodes.setups.iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(g.edges.js.len(), 3);
        assert!(g.features_finite());
    }

    #[test]
    fn instance_a_after_first_assignment() {
        let inst = instance_a();
        let mut env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        env.step(Action::Assign { job: 0, machine: 0 }).unwrap();
        let g = build_graph(&inst, env.state());
        let ms = &g.edges.ms[0];
        assert_eq!(g.nodes.setups[ms.dst].id, 1);
        assert_eq!(g.edges.js.len(), 1);
        assert_eq!(g.nodes.setups[g.edges.js[0].dst].id, 2);
        let sm = &g.edges.sm[0];
        assert_eq!(g.nodes.setups[sm.src].id, 2);
        assert_eq!(sm.dst, 0);
        assert_eq!(sm.x[0] * g.meta.p_bar, 1.0);
    }

    #[test]
    fn globals_at_reset() {
        let inst = three_machine_instance();
        let env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        let g = global_features(&inst, env.state());
        assert_eq!(g.wip, 3);
        assert_eq!(g.tardy, 0);
        assert_eq!(g.tst, 0);
        assert_eq!(g.mean_flow_time, 0.0);
        assert_eq!(g.idle_machines, 3);
        assert_eq!(g.to_vec().len(), GLOBAL_FEATURES);
    }

    #[test]
    fn globals_after_one_assignment() {
        let inst = three_machine_instance();
        let mut env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        env.step(Action::Assign { job: 0, machine: 0 }).unwrap();
        let g = global_features(&inst, env.state());
        assert_eq!(env.state().now, 0);
        assert_eq!(g.idle_machines, 2);
        assert_eq!(g.setting_up, 1);
        assert_eq!(g.wip, 2);
        assert_eq!(g.tst, 2);
    }

    #[test]
    fn no_future_events_means_no_arrivals() {
        let inst = instance_a();
        let env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        assert_eq!(global_features(&inst, env.state()).arrivals_soon, 0);
    }

    #[test]
    fn empty_visible_set_keeps_machines() {
        let mut inst = instance_a();
        inst.release = vec![0, 100];
        let mut env = SchedulingEnv::reset(&inst, RewardConfig::default()).unwrap();
        env.step(Action::Assign { job: 0, machine: 0 }).unwrap();
        // Rewind to a mid-busy snapshot: job 0 running, job 1 far in the future.
        let mut state = env.state().clone();
        state.now = 2;
        state.jobs[0].status = JobStatus::Assigned;
        state.jobs[1].status = JobStatus::Unreleased;
        let g = build_graph(&inst, &state);
        assert!(g.nodes.jobs.is_empty());
        assert_eq!(g.nodes.machines.len(), 1);
        let text = g.to_json();
        assert!(text.contains("\"jobs\":[]"));
        assert_eq!(HeteroGraph::from_json(&text).unwrap(), g);
    }
}
