//! Exhaustive solver for tiny instances: the ground truth the other methods
//! are checked against.
//!
//! Schedules are enumerated as every eligible assignment (mixed-radix
//! counter, last job fastest) times every per-machine permutation
//! (lexicographic, machine 0 outermost), each decoded with canonical timing.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::problem::{evaluate_machine, ObjectiveValues, ProblemInstance, Schedule};

pub const MAX_EXACT_JOBS: usize = 8;
pub const MAX_EXACT_MACHINES: usize = 3;

fn guard(inst: &ProblemInstance) -> Result<()> {
    if inst.n > MAX_EXACT_JOBS || inst.m > MAX_EXACT_MACHINES {
        return Err(CoreError::TooLarge {
            n: inst.n,
            m: inst.m,
            max_n: MAX_EXACT_JOBS,
            max_m: MAX_EXACT_MACHINES,
        });
    }
    Ok(())
}

/// In-place lexicographic successor; false once the last permutation is passed.
fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        v.reverse();
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

/// Calls `visit` once per feasible schedule, in enumeration order.
pub fn for_each_schedule<F>(inst: &ProblemInstance, mut visit: F)
where
    F: FnMut(&[Vec<usize>], ObjectiveValues),
{
    let mut digits = vec![0usize; inst.n];
    loop {
        let mut seqs = vec![Vec::new(); inst.m];
        for (j, &d) in digits.iter().enumerate() {
            seqs[inst.eligible[j][d]].push(j);
        }
        permute_machines(inst, &mut seqs, 0, ObjectiveValues::default(), &mut visit);

        // Mixed-radix increment, last job fastest.
        let mut pos = inst.n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < inst.eligible[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

fn permute_machines<F>(
    inst: &ProblemInstance,
    seqs: &mut Vec<Vec<usize>>,
    machine: usize,
    acc: ObjectiveValues,
    visit: &mut F,
) where
    F: FnMut(&[Vec<usize>], ObjectiveValues),
{
    if machine == seqs.len() {
        visit(seqs, acc);
        return;
    }
    loop {
        let part = evaluate_machine(inst, machine, &seqs[machine]);
        let total = ObjectiveValues { twt: acc.twt + part.twt, tst: acc.tst + part.tst };
        permute_machines(inst, seqs, machine + 1, total, visit);
        if !next_permutation(&mut seqs[machine]) {
            break;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub schedule: Schedule,
    pub objectives: ObjectiveValues,
    pub value: f64,
}

/// Minimizes `alpha·twt + beta·tst`; ties go to the smaller (twt, tst), then
/// to the earlier schedule in enumeration order.
pub fn solve_exact_scalarized(inst: &ProblemInstance, alpha: f64, beta: f64) -> Result<ExactSolution> {
    guard(inst)?;
    crate::problem::scalarize(ObjectiveValues::default(), alpha, beta)?;
    let mut best: Option<(f64, ObjectiveValues, Vec<Vec<usize>>)> = None;
    for_each_schedule(inst, |seqs, obj| {
        let value = alpha * obj.twt as f64 + beta * obj.tst as f64;
        let better = match &best {
            None => true,
            Some((v, o, _)) => value < *v || (value == *v && (obj.twt, obj.tst) < (o.twt, o.tst)),
        };
        if better {
            best = Some((value, obj, seqs.to_vec()));
        }
    });
    let (value, objectives, seqs) = best.expect("at least one schedule exists");
    Ok(ExactSolution { schedule: Schedule::from_sequences(inst, seqs)?, objectives, value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub objectives: ObjectiveValues,
    /// First schedule (enumeration order) attaining the point.
    pub witness: Vec<Vec<usize>>,
}

/// `a` weakly dominates `b` (no worse on both axes).
fn weakly_dominates(a: ObjectiveValues, b: ObjectiveValues) -> bool {
    a.twt <= b.twt && a.tst <= b.tst
}

/// Nondominated (twt, tst) points over all feasible schedules, sorted by twt.
pub fn pareto_enumerate(inst: &ProblemInstance) -> Result<Vec<ParetoPoint>> {
    guard(inst)?;
    let mut front: Vec<ParetoPoint> = Vec::new();
    for_each_schedule(inst, |seqs, obj| {
        if front.iter().any(|p| weakly_dominates(p.objectives, obj)) {
            return;
        }
        front.retain(|p| !weakly_dominates(obj, p.objectives));
        front.push(ParetoPoint { objectives: obj, witness: seqs.to_vec() });
    });
    front.sort_by_key(|p| (p.objectives.twt, p.objectives.tst));
    Ok(front)
}

/// CSV `twt,tst` of a front.
pub fn front_csv(front: &[ParetoPoint]) -> String {
    let mut out = String::from("twt,tst\n");
    for p in front {
        out.push_str(&format!("{},{}\n", p.objectives.twt, p.objectives.tst));
    }
    out
}
