//! Genetic algorithm baseline over per-machine job sequences.
//!
//! Fitness is the weighted sum of objectives normalized by an ATCSR_Rm run on
//! the same instance: `α·TWT/TWT_ref + (1 − α)·TST/TST_ref` (lower is better).
//! Operators: tournament selection, order crossover on the concatenated
//! sequence with repair, insertion mutation, and elitism. The population is
//! seeded with the ATCSR_Rm schedule, so the incumbent never exceeds 1.0.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atcsr::{solve_atcsr, AtcsrParams};
use crate::error::{CoreError, Result};
use crate::problem::{evaluate_machine, evaluate_sequences, ObjectiveValues, ProblemInstance, Schedule};

/// Job order per machine. Every job appears exactly once, on an eligible machine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chromosome {
    pub sequences: Vec<Vec<usize>>,
}

impl Chromosome {
    pub fn validate(&self, inst: &ProblemInstance) -> Result<()> {
        if self.sequences.len() != inst.m {
            return Err(CoreError::Malformed(format!(
                "chromosome has {} machines, instance has {}",
                self.sequences.len(),
                inst.m
            )));
        }
        let mut seen = vec![false; inst.n];
        for (k, seq) in self.sequences.iter().enumerate() {
            for &j in seq {
                if j >= inst.n || std::mem::replace(&mut seen[j], true) {
                    return Err(CoreError::Malformed(format!("job {j} is out of range or repeated")));
                }
                if !inst.is_eligible(j, k) {
                    return Err(CoreError::Malformed(format!("job {j} is not eligible on machine {k}")));
                }
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(CoreError::Malformed(format!("job {j} is missing")));
        }
        Ok(())
    }

    /// Each job on a uniformly chosen eligible machine, machines shuffled.
    pub fn random<R: Rng>(inst: &ProblemInstance, rng: &mut R) -> Self {
        let mut sequences = vec![Vec::new(); inst.m];
        let mut order: Vec<usize> = (0..inst.n).collect();
        order.shuffle(rng);
        for j in order {
            let elig = &inst.eligible[j];
            sequences[elig[rng.gen_range(0..elig.len())]].push(j);
        }
        Chromosome { sequences }
    }

    fn flatten(&self) -> (Vec<usize>, Vec<usize>) {
        let lengths = self.sequences.iter().map(Vec::len).collect();
        (self.sequences.iter().flatten().copied().collect(), lengths)
    }
}

pub fn decode(c: &Chromosome, inst: &ProblemInstance) -> Result<Schedule> {
    c.validate(inst)?;
    Schedule::from_sequences(inst, c.sequences.clone())
}

/// Normalized weighted-sum fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub alpha: f64,
    pub twt_ref: f64,
    pub tst_ref: f64,
}

impl Fitness {
    /// References are floored at 1 so a zero reference never divides by zero.
    pub fn new(alpha: f64, twt_ref: f64, tst_ref: f64) -> Self {
        Fitness { alpha, twt_ref: twt_ref.max(1.0), tst_ref: tst_ref.max(1.0) }
    }

    pub fn from_reference(alpha: f64, reference: ObjectiveValues) -> Self {
        Fitness::new(alpha, reference.twt as f64, reference.tst as f64)
    }

    #[inline]
    pub fn of(&self, obj: ObjectiveValues) -> f64 {
        self.alpha * obj.twt as f64 / self.twt_ref + (1.0 - self.alpha) * obj.tst as f64 / self.tst_ref
    }

    /// The fitness weight under which this normalization ranks schedules
    /// exactly like `alpha·twt + beta·tst`.
    pub fn alpha_for_weights(alpha: f64, beta: f64, reference: ObjectiveValues) -> f64 {
        let probe = Fitness::from_reference(0.5, reference);
        let (a, b) = (alpha * probe.twt_ref, beta * probe.tst_ref);
        a / (a + b)
    }

    /// Weights `(α', β')` such that `α'·twt + β'·tst` equals this fitness.
    pub fn as_weights(&self) -> (f64, f64) {
        (self.alpha / self.twt_ref, (1.0 - self.alpha) / self.tst_ref)
    }
}

pub fn fitness(c: &Chromosome, inst: &ProblemInstance, twt_ref: f64, tst_ref: f64, alpha: f64) -> f64 {
    Fitness::new(alpha, twt_ref, tst_ref).of(evaluate_sequences(inst, &c.sequences))
}

/// Inserts `job` where it raises the fitness the least (ties: lowest machine,
/// then earliest position).
fn insert_cheapest(seqs: &mut [Vec<usize>], job: usize, inst: &ProblemInstance, fit: &Fitness) {
    let mut best: Option<(f64, usize, usize)> = None;
    let mut trial = Vec::with_capacity(inst.n);
    for &k in &inst.eligible[job] {
        let base = fit.of(evaluate_machine(inst, k, &seqs[k]));
        for pos in 0..=seqs[k].len() {
            trial.clear();
            trial.extend_from_slice(&seqs[k][..pos]);
            trial.push(job);
            trial.extend_from_slice(&seqs[k][pos..]);
            let delta = fit.of(evaluate_machine(inst, k, &trial)) - base;
            if best.map_or(true, |(b, _, _)| delta < b) {
                best = Some((delta, k, pos));
            }
        }
    }
    let (_, k, pos) = best.expect("eligible set is non-empty");
    seqs[k].insert(pos, job);
}

/// Drops repeated and ineligible entries (first occurrence wins) and inserts
/// every missing job at its cheapest feasible position.
pub fn repair(mut seqs: Vec<Vec<usize>>, inst: &ProblemInstance, fit: &Fitness) -> Chromosome {
    let mut seen = vec![false; inst.n];
    for (k, seq) in seqs.iter_mut().enumerate() {
        seq.retain(|&j| j < inst.n && inst.is_eligible(j, k) && !std::mem::replace(&mut seen[j], true));
    }
    for job in 0..inst.n {
        if !seen[job] {
            insert_cheapest(&mut seqs, job, inst, fit);
        }
    }
    Chromosome { sequences: seqs }
}

/// Order crossover on the concatenated job order. The child keeps a random
/// slice of `a` in place and fills the remaining slots with `b`'s order;
/// slots inherit `a`'s machine layout. Jobs landing on an ineligible machine
/// are re-inserted by [`repair`].
pub fn crossover<R: Rng>(
    a: &Chromosome,
    b: &Chromosome,
    inst: &ProblemInstance,
    fit: &Fitness,
    rng: &mut R,
) -> Chromosome {
    let (flat_a, lengths) = a.flatten();
    let (flat_b, _) = b.flatten();
    let n = flat_a.len();
    if n == 0 {
        return a.clone();
    }
    let mut i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n);
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let mut child = vec![usize::MAX; n];
    let mut used = vec![false; inst.n];
    for pos in i..=j {
        child[pos] = flat_a[pos];
        used[flat_a[pos]] = true;
    }
    let mut fill = (j + 1) % n;
    for step in 0..flat_b.len() {
        let job = flat_b[(j + 1 + step) % flat_b.len()];
        if used[job] {
            continue;
        }
        while child[fill] != usize::MAX {
            fill = (fill + 1) % n;
        }
        child[fill] = job;
        used[job] = true;
    }
    let mut seqs = Vec::with_capacity(lengths.len());
    let mut offset = 0;
    for len in lengths {
        seqs.push(child[offset..offset + len].iter().copied().filter(|&j| j != usize::MAX).collect());
        offset += len;
    }
    repair(seqs, inst, fit)
}

/// With probability `p_mut`, moves one random job to a uniformly random
/// (eligible machine, position) slot.
pub fn mutate<R: Rng>(c: &Chromosome, inst: &ProblemInstance, rng: &mut R, p_mut: f64) -> Chromosome {
    let mut out = c.clone();
    if inst.n == 0 || !rng.gen_bool(p_mut.clamp(0.0, 1.0)) {
        return out;
    }
    let job = rng.gen_range(0..inst.n);
    for seq in &mut out.sequences {
        seq.retain(|&j| j != job);
    }
    let slots: usize = inst.eligible[job].iter().map(|&k| out.sequences[k].len() + 1).sum();
    let mut pick = rng.gen_range(0..slots);
    for &k in &inst.eligible[job] {
        let len = out.sequences[k].len() + 1;
        if pick < len {
            out.sequences[k].insert(pick, job);
            break;
        }
        pick -= len;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub tournament: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub elites: usize,
    pub alpha_fitness: f64,
    pub budget_ms: u64,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 60,
            tournament: 2,
            crossover_prob: 0.9,
            mutation_prob: 0.2,
            elites: 2,
            alpha_fitness: 0.5,
            budget_ms: 1000,
            max_generations: 1_000_000,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.population >= 2
            && self.tournament >= 1
            && (0.0..=1.0).contains(&self.crossover_prob)
            && (0.0..=1.0).contains(&self.mutation_prob)
            && (0.0..=1.0).contains(&self.alpha_fitness)
            && self.elites < self.population;
        if ok {
            Ok(())
        } else {
            Err(CoreError::InvalidParams(format!("invalid GA parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaResult {
    pub best: Chromosome,
    pub schedule: Schedule,
    pub objectives: ObjectiveValues,
    pub fitness: f64,
    /// Generations completed after the initial population.
    pub generations: usize,
    /// Incumbent fitness after initialization and after every generation.
    pub history: Vec<f64>,
    pub reference: ObjectiveValues,
    pub elapsed: Duration,
}

struct Individual {
    genes: Chromosome,
    fitness: f64,
}

fn tournament<'p, R: Rng>(pop: &'p [Individual], size: usize, rng: &mut R) -> &'p Individual {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let other = &pop[rng.gen_range(0..pop.len())];
        if other.fitness < best.fitness {
            best = other;
        }
    }
    best
}

pub fn run_ga(inst: &ProblemInstance, params: &GaParams) -> Result<GaResult> {
    params.validate()?;
    let started = Instant::now();
    let budget = Duration::from_millis(params.budget_ms);
    let seed_solution = solve_atcsr(inst, &AtcsrParams::default())?;
    let reference = seed_solution.objectives;
    let fit = Fitness::from_reference(params.alpha_fitness, reference);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let evaluate = |genes: Chromosome| {
        let fitness = fit.of(evaluate_sequences(inst, &genes.sequences));
        Individual { genes, fitness }
    };
    let mut pop: Vec<Individual> = Vec::with_capacity(params.population);
    pop.push(evaluate(Chromosome { sequences: seed_solution.schedule.sequences }));
    while pop.len() < params.population {
        pop.push(evaluate(Chromosome::random(inst, &mut rng)));
    }
    // Stable sort: earlier individuals win ties.
    pop.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
    let mut history = vec![pop[0].fitness];

    let mut generations = 0;
    while generations < params.max_generations && started.elapsed() < budget {
        let mut next: Vec<Individual> = Vec::with_capacity(params.population);
        for elite in &pop[..params.elites] {
            next.push(Individual { genes: elite.genes.clone(), fitness: elite.fitness });
        }
        while next.len() < params.population {
            let a = tournament(&pop, params.tournament, &mut rng);
            let b = tournament(&pop, params.tournament, &mut rng);
            let child = if rng.gen_bool(params.crossover_prob) {
                crossover(&a.genes, &b.genes, inst, &fit, &mut rng)
            } else {
                a.genes.clone()
            };
            next.push(evaluate(mutate(&child, inst, &mut rng, params.mutation_prob)));
        }
        next.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        pop = next;
        generations += 1;
        history.push(pop[0].fitness);
    }

    let best = pop.swap_remove(0);
    let schedule = decode(&best.genes, inst)?;
    Ok(GaResult {
        objectives: evaluate_sequences(inst, &best.genes.sequences),
        best: best.genes,
        schedule,
        fitness: best.fitness,
        generations,
        history,
        reference,
        elapsed: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_alpha_gives_proportional_weights() {
        for (alpha, beta, twt, tst) in [(1.0, 1.0, 400, 30), (0.5, 2.0, 7, 0), (1.0, 0.0, 0, 0), (0.0, 3.0, 9, 9)] {
            let reference = ObjectiveValues { twt, tst };
            let fit = Fitness::from_reference(Fitness::alpha_for_weights(alpha, beta, reference), reference);
            let (a, b) = fit.as_weights();
            assert!((a * beta - b * alpha).abs() < 1e-12, "{alpha} {beta} {twt} {tst}");
        }
    }
    use crate::instance_gen::{generate_instance, GenParams};
    use crate::problem::tests::instance_a;
    use crate::problem::{validate_schedule, ObjectiveValues};

    fn small(seed: u64, delta: f64) -> ProblemInstance {
        generate_instance(&GenParams { n: 8, m: 3, elig_density_delta: delta, seed, ..GenParams::default() })
            .unwrap()
    }

    #[test]
    fn decode_instance_a() {
        let inst = instance_a();
        let fwd = Chromosome { sequences: vec![vec![0, 1]] };
        let rev = Chromosome { sequences: vec![vec![1, 0]] };
        assert_eq!(evaluate_sequences(&inst, &decode(&fwd, &inst).unwrap().sequences), ObjectiveValues { twt: 4, tst: 2 });
        let sched = decode(&rev, &inst).unwrap();
        assert_eq!(sched.timings[1].unwrap().completion, 5);
        assert_eq!(sched.timings[0].unwrap().completion, 12);
        assert_eq!(evaluate_sequences(&inst, &sched.sequences), ObjectiveValues { twt: 16, tst: 4 });
    }

    #[test]
    fn decode_rejects_malformed() {
        let inst = instance_a();
        assert!(decode(&Chromosome { sequences: vec![vec![0]] }, &inst).is_err());
        assert!(decode(&Chromosome { sequences: vec![vec![0, 0, 1]] }, &inst).is_err());
        assert!(decode(&Chromosome { sequences: vec![vec![0, 1], vec![]] }, &inst).is_err());
    }

    #[test]
    fn empty_machine_contributes_nothing() {
        let inst = small(1, 1.0);
        assert_eq!(evaluate_machine(&inst, 2, &[]), ObjectiveValues::default());
    }

    #[test]
    fn fitness_examples() {
        let inst = instance_a();
        let fwd = Chromosome { sequences: vec![vec![0, 1]] };
        let rev = Chromosome { sequences: vec![vec![1, 0]] };
        assert_eq!(fitness(&fwd, &inst, 4.0, 2.0, 0.5), 1.0);
        assert_eq!(fitness(&rev, &inst, 4.0, 2.0, 0.5), 3.0);
        assert_eq!(Fitness::new(0.5, 4.0, 2.0).of(ObjectiveValues::default()), 0.0);
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let inst = small(2, 0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = Fitness::new(0.5, 100.0, 10.0);
        for _ in 0..50 {
            let a = Chromosome::random(&inst, &mut rng);
            let child = crossover(&a, &a, &inst, &fit, &mut rng);
            assert_eq!(child, a);
        }
    }

    #[test]
    fn operators_preserve_invariants() {
        let fit = Fitness::new(0.5, 100.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let inst = small(seed, 0.75);
            for _ in 0..50 {
                let a = Chromosome::random(&inst, &mut rng);
                let b = Chromosome::random(&inst, &mut rng);
                let child = crossover(&a, &b, &inst, &fit, &mut rng);
                child.validate(&inst).unwrap();
                let mutated = mutate(&child, &inst, &mut rng, 1.0);
                mutated.validate(&inst).unwrap();
            }
        }
    }

    #[test]
    fn zero_mutation_is_identity() {
        let inst = small(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Chromosome::random(&inst, &mut rng);
        assert_eq!(mutate(&a, &inst, &mut rng, 0.0), a);
    }

    #[test]
    fn single_job_mutation_stays_eligible() {
        let inst = generate_instance(&GenParams { n: 1, m: 4, elig_density_delta: 0.5, seed: 5, ..GenParams::default() })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut c = Chromosome::random(&inst, &mut rng);
        for _ in 0..100 {
            c = mutate(&c, &inst, &mut rng, 1.0);
            let k = c.sequences.iter().position(|s| !s.is_empty()).unwrap();
            assert!(inst.eligible[0].contains(&k));
        }
    }

    #[test]
    fn repair_fills_gaps_and_drops_duplicates() {
        let inst = small(4, 0.75);
        let fit = Fitness::new(0.5, 100.0, 10.0);
        let mut seqs = vec![Vec::new(); inst.m];
        seqs[0] = vec![3, 3, 5];
        let c = repair(seqs, &inst, &fit);
        c.validate(&inst).unwrap();
    }

    #[test]
    fn instance_a_reaches_atcsr_optimum() {
        let inst = instance_a();
        let res = run_ga(&inst, &GaParams { budget_ms: 50, ..GaParams::default() }).unwrap();
        assert_eq!(res.best.sequences, vec![vec![0, 1]]);
        assert_eq!(res.fitness, 1.0);
    }

    #[test]
    fn incumbent_is_monotone_and_bounded() {
        for seed in 0..3 {
            let inst = small(seed, 1.0);
            let params = GaParams { budget_ms: 10_000, max_generations: 40, seed, ..GaParams::default() };
            let res = run_ga(&inst, &params).unwrap();
            assert_eq!(res.generations, 40);
            assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(res.fitness <= 1.0);
            assert!(validate_schedule(&inst, &res.schedule).is_empty());
            let again = run_ga(&inst, &params).unwrap();
            assert_eq!(again.best, res.best);
            assert_eq!(again.history, res.history);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let inst = instance_a();
        assert!(run_ga(&inst, &GaParams { population: 1, ..GaParams::default() }).is_err());
        assert!(run_ga(&inst, &GaParams { elites: 60, ..GaParams::default() }).is_err());
    }
}
