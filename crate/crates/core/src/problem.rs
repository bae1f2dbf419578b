//! UPMSP data model: instances, schedules, feasibility and the two objectives.
//!
//! Jobs and machines are 0-based everywhere. The setup tensor carries an
//! extra leading row for the idle pseudo-job, so `setup[0][j][k]` is the
//! initial setup of job `j` on machine `k` and `setup[i + 1][j][k]` is the
//! changeover from job `i` to job `j`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::instance_gen::GenParams;

/// Setup-row index of the idle pseudo-job.
pub const IDLE_ROW: usize = 0;

/// Row of the setup tensor that describes "job `job` was processed last".
#[inline]
pub fn setup_row(job: usize) -> usize {
    job + 1
}

/// Generator provenance attached to an instance file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub params: Option<GenParams>,
    pub seed: Option<u64>,
}

/// A UPMSP instance with release dates, sequence- and machine-dependent
/// setups and machine eligibility. All times are integer time units.
///
/// Field order is the canonical on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub n: usize,
    pub m: usize,
    /// `processing[j][k]`
    pub processing: Vec<Vec<i64>>,
    pub release: Vec<i64>,
    pub due: Vec<i64>,
    pub weight: Vec<i64>,
    /// `setup[i][j][k]`, `i ∈ 0..=n` with row 0 the idle pseudo-job.
    pub setup: Vec<Vec<Vec<i64>>>,
    /// Eligible machines per job, ascending.
    pub eligible: Vec<Vec<usize>>,
    #[serde(default)]
    pub meta: InstanceMeta,
}

impl ProblemInstance {
    #[inline]
    pub fn p(&self, job: usize, machine: usize) -> i64 {
        self.processing[job][machine]
    }

    /// Setup time for `job` on `machine` when the machine's last job is `prev`
    /// (`None` = idle pseudo-job).
    #[inline]
    pub fn s(&self, prev: Option<usize>, job: usize, machine: usize) -> i64 {
        let row = prev.map_or(IDLE_ROW, setup_row);
        self.setup[row][job][machine]
    }

    pub fn is_eligible(&self, job: usize, machine: usize) -> bool {
        self.eligible[job].contains(&machine)
    }

    /// Mean processing time over all `n·m` job-machine pairs (0 if `n = 0`).
    pub fn mean_processing(&self) -> f64 {
        let count = self.n * self.m;
        if count == 0 {
            return 0.0;
        }
        let total: i64 = self.processing.iter().flatten().sum();
        total as f64 / count as f64
    }

    /// Mean processing time of `job` over its eligible machines.
    pub fn mean_eligible_processing(&self, job: usize) -> f64 {
        let elig = &self.eligible[job];
        if elig.is_empty() {
            return 0.0;
        }
        let total: i64 = elig.iter().map(|&k| self.processing[job][k]).sum();
        total as f64 / elig.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstanceIssue {
    NoMachines,
    Shape { field: &'static str, expected: String, found: String },
    ProcessingBelowOne { job: usize, machine: usize, value: i64 },
    NegativeRelease { job: usize, value: i64 },
    WeightBelowOne { job: usize, value: i64 },
    NegativeSetup { from_row: usize, job: usize, machine: usize, value: i64 },
    EmptyEligibleSet { job: usize },
    EligibleOutOfRange { job: usize, machine: usize },
    EligibleDuplicate { job: usize, machine: usize },
}

impl fmt::Display for InstanceIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceIssue::NoMachines => write!(f, "instance has no machines"),
            InstanceIssue::Shape { field, expected, found } => {
                write!(f, "{field}: expected shape {expected}, found {found}")
            }
            InstanceIssue::ProcessingBelowOne { job, machine, value } => {
                write!(f, "processing[{job}][{machine}] = {value} violates processing bound p >= 1")
            }
            InstanceIssue::NegativeRelease { job, value } => {
                write!(f, "release[{job}] = {value} is negative")
            }
            InstanceIssue::WeightBelowOne { job, value } => {
                write!(f, "weight[{job}] = {value} violates w >= 1")
            }
            InstanceIssue::NegativeSetup { from_row, job, machine, value } => {
                write!(f, "setup[{from_row}][{job}][{machine}] = {value} is negative")
            }
            InstanceIssue::EmptyEligibleSet { job } => {
                write!(f, "job {job} has an empty eligible set")
            }
            InstanceIssue::EligibleOutOfRange { job, machine } => {
                write!(f, "job {job} lists machine {machine} which does not exist")
            }
            InstanceIssue::EligibleDuplicate { job, machine } => {
                write!(f, "job {job} lists machine {machine} twice")
            }
        }
    }
}

/// Lists every violated invariant; an empty report means the instance is valid.
pub fn validate_instance(inst: &ProblemInstance) -> Vec<InstanceIssue> {
    let mut issues = Vec::new();
    let (n, m) = (inst.n, inst.m);
    if m == 0 {
        issues.push(InstanceIssue::NoMachines);
    }
    let shape = |field: &'static str, expected: String, found: String| InstanceIssue::Shape {
        field,
        expected,
        found,
    };

    let mut shapes_ok = true;
    if inst.processing.len() != n || inst.processing.iter().any(|row| row.len() != m) {
        issues.push(shape("processing", format!("[{n}][{m}]"), describe_2d(&inst.processing)));
        shapes_ok = false;
    }
    for (field, v) in [("release", &inst.release), ("due", &inst.due), ("weight", &inst.weight)] {
        if v.len() != n {
            issues.push(shape(field, format!("[{n}]"), format!("[{}]", v.len())));
            shapes_ok = false;
        }
    }
    if inst.eligible.len() != n {
        issues.push(shape("eligible", format!("[{n}][]"), format!("[{}][]", inst.eligible.len())));
        shapes_ok = false;
    }
    let setup_ok = inst.setup.len() == n + 1
        && inst
            .setup
            .iter()
            .all(|plane| plane.len() == n && plane.iter().all(|row| row.len() == m));
    if !setup_ok {
        issues.push(shape(
            "setup",
            format!("[{}][{n}][{m}]", n + 1),
            format!("[{}][..][..]", inst.setup.len()),
        ));
        shapes_ok = false;
    }
    if !shapes_ok {
        return issues;
    }

    for j in 0..n {
        for k in 0..m {
            let value = inst.processing[j][k];
            if value < 1 {
                issues.push(InstanceIssue::ProcessingBelowOne { job: j, machine: k, value });
            }
        }
        if inst.release[j] < 0 {
            issues.push(InstanceIssue::NegativeRelease { job: j, value: inst.release[j] });
        }
        if inst.weight[j] < 1 {
            issues.push(InstanceIssue::WeightBelowOne { job: j, value: inst.weight[j] });
        }
        let elig = &inst.eligible[j];
        if elig.is_empty() {
            issues.push(InstanceIssue::EmptyEligibleSet { job: j });
        }
        for (idx, &k) in elig.iter().enumerate() {
            if k >= m {
                issues.push(InstanceIssue::EligibleOutOfRange { job: j, machine: k });
            } else if elig[..idx].contains(&k) {
                issues.push(InstanceIssue::EligibleDuplicate { job: j, machine: k });
            }
        }
    }
    for (row, plane) in inst.setup.iter().enumerate() {
        for (j, line) in plane.iter().enumerate() {
            for (k, &value) in line.iter().enumerate() {
                if value < 0 {
                    issues.push(InstanceIssue::NegativeSetup { from_row: row, job: j, machine: k, value });
                }
            }
        }
    }
    issues
}

fn describe_2d(v: &[Vec<i64>]) -> String {
    match v.first() {
        Some(row) => format!("[{}][{}]", v.len(), row.len()),
        None => "[0][]".to_string(),
    }
}

/// Timing of a single job in a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobTiming {
    pub machine: usize,
    pub setup_start: i64,
    /// Processing start `S`.
    pub start: i64,
    /// Completion `C = S + p`.
    pub completion: i64,
}

/// Per-machine job sequences plus per-job timings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub sequences: Vec<Vec<usize>>,
    /// Indexed by job; `None` for a job that has not been placed.
    pub timings: Vec<Option<JobTiming>>,
}

impl Schedule {
    /// Builds the schedule implied by `sequences` under the canonical timing:
    /// a setup starts once the machine is free and the job is released, and
    /// processing follows the setup immediately.
    pub fn from_sequences(inst: &ProblemInstance, sequences: Vec<Vec<usize>>) -> Result<Self, CoreError> {
        if sequences.len() != inst.m {
            return Err(CoreError::Malformed(format!(
                "expected {} machine sequences, found {}",
                inst.m,
                sequences.len()
            )));
        }
        let mut timings = vec![None; inst.n];
        for (k, seq) in sequences.iter().enumerate() {
            let mut free = 0i64;
            let mut prev = None;
            for &j in seq {
                if j >= inst.n {
                    return Err(CoreError::Malformed(format!("job {j} out of range on machine {k}")));
                }
                if timings[j].is_some() {
                    return Err(CoreError::Malformed(format!("job {j} appears more than once")));
                }
                let setup_start = free.max(inst.release[j]);
                let start = setup_start + inst.s(prev, j, k);
                let completion = start + inst.p(j, k);
                timings[j] = Some(JobTiming { machine: k, setup_start, start, completion });
                free = completion;
                prev = Some(j);
            }
        }
        Ok(Schedule { sequences, timings })
    }
}

/// A violated schedule constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongMachineCount { expected: usize, found: usize },
    UnknownJob { job: usize, machine: usize },
    DuplicateJob { job: usize },
    MissingJob { job: usize },
    TimingMismatch { job: usize, machine: usize },
    Ineligible { job: usize, machine: usize },
    BeforeRelease { job: usize, start: i64, release: i64 },
    Overlap { job: usize, machine: usize, start: i64, earliest: i64 },
    SetupWindow { job: usize, setup_start: i64, free: i64 },
    Preempted { job: usize, expected_completion: i64, completion: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongMachineCount { expected, found } => {
                write!(f, "expected {expected} machine sequences, found {found}")
            }
            Violation::UnknownJob { job, machine } => {
                write!(f, "machine {machine} lists unknown job {job}")
            }
            Violation::DuplicateJob { job } => write!(f, "job {job} appears more than once"),
            Violation::MissingJob { job } => write!(f, "job {job} is not scheduled"),
            Violation::TimingMismatch { job, machine } => {
                write!(f, "job {job} timing does not name machine {machine}")
            }
            Violation::Ineligible { job, machine } => {
                write!(f, "eligibility: job {job} is not eligible on machine {machine}")
            }
            Violation::BeforeRelease { job, start, release } => {
                write!(f, "release: job {job} starts at {start} before release {release}")
            }
            Violation::Overlap { job, machine, start, earliest } => write!(
                f,
                "capacity: job {job} on machine {machine} starts at {start}, earliest allowed {earliest}"
            ),
            Violation::SetupWindow { job, setup_start, free } => write!(
                f,
                "capacity: setup for job {job} starts at {setup_start} while the machine is busy until {free}"
            ),
            Violation::Preempted { job, expected_completion, completion } => write!(
                f,
                "non-preemption: job {job} completes at {completion}, expected {expected_completion}"
            ),
        }
    }
}

/// Checks release dates, eligibility, non-preemption and machine capacity
/// (including the initial setup from the idle state), plus the partition
/// property. Returns every violation found.
pub fn validate_schedule(inst: &ProblemInstance, sched: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if sched.sequences.len() != inst.m {
        out.push(Violation::WrongMachineCount { expected: inst.m, found: sched.sequences.len() });
        return out;
    }
    let mut seen = vec![false; inst.n];
    for (k, seq) in sched.sequences.iter().enumerate() {
        let mut free = 0i64;
        let mut prev = None;
        for &j in seq {
            if j >= inst.n {
                out.push(Violation::UnknownJob { job: j, machine: k });
                continue;
            }
            if std::mem::replace(&mut seen[j], true) {
                out.push(Violation::DuplicateJob { job: j });
                continue;
            }
            let Some(t) = sched.timings.get(j).copied().flatten() else {
                out.push(Violation::MissingJob { job: j });
                continue;
            };
            if t.machine != k {
                out.push(Violation::TimingMismatch { job: j, machine: k });
            }
            if !inst.is_eligible(j, k) {
                out.push(Violation::Ineligible { job: j, machine: k });
            }
            if t.start < inst.release[j] {
                out.push(Violation::BeforeRelease { job: j, start: t.start, release: inst.release[j] });
            }
            let earliest = free + inst.s(prev, j, k);
            if t.start < earliest {
                out.push(Violation::Overlap { job: j, machine: k, start: t.start, earliest });
            }
            if t.setup_start < free || t.setup_start + inst.s(prev, j, k) > t.start {
                out.push(Violation::SetupWindow { job: j, setup_start: t.setup_start, free });
            }
            let expected = t.start + inst.p(j, k);
            if t.completion != expected {
                out.push(Violation::Preempted { job: j, expected_completion: expected, completion: t.completion });
            }
            free = t.completion.max(free);
            prev = Some(j);
        }
    }
    for (j, was_seen) in seen.iter().enumerate() {
        if !was_seen {
            out.push(Violation::MissingJob { job: j });
        }
    }
    out
}

/// The objective pair of a schedule. Both are sums of integers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectiveValues {
    pub twt: i64,
    pub tst: i64,
}

impl ObjectiveValues {
    pub fn scalarized(&self, alpha: f64, beta: f64) -> Result<f64, CoreError> {
        scalarize(*self, alpha, beta)
    }
}

/// `alpha·twt + beta·tst`. Weights must be non-negative and not both zero.
pub fn scalarize(obj: ObjectiveValues, alpha: f64, beta: f64) -> Result<f64, CoreError> {
    if !(alpha >= 0.0 && beta >= 0.0) || alpha + beta <= 0.0 || !(alpha + beta).is_finite() {
        return Err(CoreError::InvalidWeights { alpha, beta });
    }
    Ok(alpha * obj.twt as f64 + beta * obj.tst as f64)
}

/// Total weighted tardiness and total setup time of a feasible schedule.
pub fn compute_objectives(inst: &ProblemInstance, sched: &Schedule) -> Result<ObjectiveValues, CoreError> {
    if let Some(v) = validate_schedule(inst, sched).into_iter().next() {
        return Err(CoreError::Infeasible(v.to_string()));
    }
    Ok(objectives_unchecked(inst, sched))
}

pub(crate) fn objectives_unchecked(inst: &ProblemInstance, sched: &Schedule) -> ObjectiveValues {
    let mut obj = ObjectiveValues::default();
    for (k, seq) in sched.sequences.iter().enumerate() {
        let mut prev = None;
        for &j in seq {
            obj.tst += inst.s(prev, j, k);
            let c = sched.timings[j].expect("validated").completion;
            obj.twt += inst.weight[j] * (c - inst.due[j]).max(0);
            prev = Some(j);
        }
    }
    obj
}

/// Objectives of `sequences` decoded with canonical timing, without building
/// a [`Schedule`]. Used on hot paths (GA, exact enumeration).
pub fn evaluate_sequences(inst: &ProblemInstance, sequences: &[Vec<usize>]) -> ObjectiveValues {
    let mut obj = ObjectiveValues::default();
    for (k, seq) in sequences.iter().enumerate() {
        let part = evaluate_machine(inst, k, seq);
        obj.twt += part.twt;
        obj.tst += part.tst;
    }
    obj
}

/// Objectives contributed by a single machine sequence.
#[inline]
pub fn evaluate_machine(inst: &ProblemInstance, machine: usize, seq: &[usize]) -> ObjectiveValues {
    let mut obj = ObjectiveValues::default();
    let mut free = 0i64;
    let mut prev = None;
    for &j in seq {
        let s = inst.s(prev, j, machine);
        let c = free.max(inst.release[j]) + s + inst.p(j, machine);
        obj.tst += s;
        obj.twt += inst.weight[j] * (c - inst.due[j]).max(0);
        free = c;
        prev = Some(j);
    }
    obj
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// One machine, two jobs; the small hand-checked instance used across tests.
    pub(crate) fn instance_a() -> ProblemInstance {
        ProblemInstance {
            n: 2,
            m: 1,
            processing: vec![vec![5], vec![3]],
            release: vec![0, 0],
            due: vec![4, 10],
            weight: vec![2, 1],
            setup: vec![
                vec![vec![1], vec![2]],
                vec![vec![0], vec![1]],
                vec![vec![2], vec![0]],
            ],
            eligible: vec![vec![0], vec![0]],
            meta: InstanceMeta::default(),
        }
    }

    #[test]
    fn valid_instance_has_empty_report() {
        assert!(validate_instance(&instance_a()).is_empty());
    }

    #[test]
    fn empty_eligible_set_is_named() {
        let mut inst = instance_a();
        inst.eligible[0].clear();
        let report = validate_instance(&inst);
        assert_eq!(report, vec![InstanceIssue::EmptyEligibleSet { job: 0 }]);
        assert!(report[0].to_string().contains("job 0"));
    }

    #[test]
    fn zero_processing_is_reported() {
        let mut inst = instance_a();
        inst.processing[0][0] = 0;
        let report = validate_instance(&inst);
        assert_eq!(report.len(), 1);
        assert!(report[0].to_string().contains("processing bound"));
    }

    #[test]
    fn bad_shapes_short_circuit() {
        let mut inst = instance_a();
        inst.setup.pop();
        let report = validate_instance(&inst);
        assert!(matches!(report[0], InstanceIssue::Shape { field: "setup", .. }));
    }

    #[test]
    fn instance_a_forward_order() {
        let inst = instance_a();
        let sched = Schedule::from_sequences(&inst, vec![vec![0, 1]]).unwrap();
        assert_eq!(
            sched.timings[0],
            Some(JobTiming { machine: 0, setup_start: 0, start: 1, completion: 6 })
        );
        assert_eq!(
            sched.timings[1],
            Some(JobTiming { machine: 0, setup_start: 6, start: 7, completion: 10 })
        );
        assert!(validate_schedule(&inst, &sched).is_empty());
        assert_eq!(compute_objectives(&inst, &sched).unwrap(), ObjectiveValues { twt: 4, tst: 2 });
    }

    #[test]
    fn instance_a_reverse_order() {
        let inst = instance_a();
        let sched = Schedule::from_sequences(&inst, vec![vec![1, 0]]).unwrap();
        assert_eq!(compute_objectives(&inst, &sched).unwrap(), ObjectiveValues { twt: 16, tst: 4 });
        assert_eq!(evaluate_sequences(&inst, &sched.sequences), ObjectiveValues { twt: 16, tst: 4 });
    }

    #[test]
    fn on_time_jobs_have_zero_twt() {
        let mut inst = instance_a();
        inst.due = vec![100, 100];
        let sched = Schedule::from_sequences(&inst, vec![vec![0, 1]]).unwrap();
        assert_eq!(compute_objectives(&inst, &sched).unwrap().twt, 0);
    }

    #[test]
    fn single_job_initial_setup_counts() {
        let inst = ProblemInstance {
            n: 1,
            m: 1,
            processing: vec![vec![4]],
            release: vec![0],
            due: vec![100],
            weight: vec![1],
            setup: vec![vec![vec![2]], vec![vec![0]]],
            eligible: vec![vec![0]],
            meta: InstanceMeta::default(),
        };
        let sched = Schedule::from_sequences(&inst, vec![vec![0]]).unwrap();
        assert_eq!(compute_objectives(&inst, &sched).unwrap().tst, 2);
    }

    #[test]
    fn moved_start_is_an_overlap() {
        let inst = instance_a();
        let mut sched = Schedule::from_sequences(&inst, vec![vec![0, 1]]).unwrap();
        let t = sched.timings[1].as_mut().unwrap();
        t.start = 6;
        t.completion = 9;
        let v = validate_schedule(&inst, &sched);
        assert!(v.iter().any(|v| matches!(v, Violation::Overlap { job: 1, earliest: 7, .. })), "{v:?}");
        let err = compute_objectives(&inst, &sched).unwrap_err();
        assert!(err.to_string().contains("capacity"));
    }

    #[test]
    fn ineligible_machine_is_reported() {
        let mut inst = instance_a();
        inst.m = 2;
        for row in &mut inst.processing {
            row.push(1);
        }
        for plane in &mut inst.setup {
            for row in plane {
                row.push(0);
            }
        }
        let sched = Schedule::from_sequences(&inst, vec![vec![0], vec![1]]).unwrap();
        let v = validate_schedule(&inst, &sched);
        assert_eq!(v, vec![Violation::Ineligible { job: 1, machine: 1 }]);
    }

    #[test]
    fn missing_and_duplicate_jobs() {
        let inst = instance_a();
        let mut sched = Schedule::from_sequences(&inst, vec![vec![0, 1]]).unwrap();
        sched.sequences[0] = vec![0, 0];
        let v = validate_schedule(&inst, &sched);
        assert!(v.contains(&Violation::DuplicateJob { job: 0 }));
        assert!(v.contains(&Violation::MissingJob { job: 1 }));
    }

    #[test]
    fn release_is_enforced() {
        let mut inst = instance_a();
        inst.release[0] = 3;
        let mut sched = Schedule::from_sequences(&inst, vec![vec![0, 1]]).unwrap();
        assert_eq!(sched.timings[0].unwrap().start, 4);
        sched.timings[0] = Some(JobTiming { machine: 0, setup_start: 0, start: 1, completion: 6 });
        let v = validate_schedule(&inst, &sched);
        assert!(v.contains(&Violation::BeforeRelease { job: 0, start: 1, release: 3 }));
    }

    #[test]
    fn scalarize_examples() {
        let obj = ObjectiveValues { twt: 4, tst: 2 };
        assert_eq!(scalarize(obj, 1.0, 1.0).unwrap(), 6.0);
        assert_eq!(scalarize(obj, 1.0, 0.0).unwrap(), 4.0);
        assert_eq!(scalarize(ObjectiveValues::default(), 0.3, 2.0).unwrap(), 0.0);
        assert!(scalarize(obj, 0.0, 0.0).is_err());
        assert!(scalarize(obj, -1.0, 2.0).is_err());
    }

    #[test]
    fn json_field_order_is_canonical() {
        let text = instance_a().to_json();
        let keys = ["\"n\"", "\"m\"", "\"processing\"", "\"release\"", "\"due\"", "\"weight\"", "\"setup\"", "\"eligible\"", "\"meta\""];
        let positions: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
        assert_eq!(ProblemInstance::from_json(&text).unwrap(), instance_a());
    }
}
