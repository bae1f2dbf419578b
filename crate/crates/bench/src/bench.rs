//! Runs methods over an instance suite and aggregates the results.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use upmsp_core::{validate_schedule, ProblemInstance};

use crate::error::{BenchError, Result};
use crate::methods::{solve, Method, SolveOptions};
use crate::pareto::MethodPoint;
use crate::stats::{paired_t_test, TTest};

/// One (instance, method, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub method: String,
    pub run: usize,
    pub seed: u64,
    pub twt: i64,
    pub tst: i64,
    pub scalarized: f64,
    pub wall_ms: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResults {
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub rows: usize,
    pub avg_twt: f64,
    pub avg_tst: f64,
    pub avg_scalarized: f64,
    pub avg_ms: f64,
}

/// Every method on every instance; stochastic methods repeat `runs` times
/// with seeds `seed + run`. Each schedule is re-validated before it is
/// reported.
pub fn run_benchmark(
    instances: &[(String, ProblemInstance)],
    methods: &[Method],
    opts: &SolveOptions,
    runs: usize,
    seed: u64,
) -> Result<BenchResults> {
    if runs == 0 {
        return Err(BenchError::Invalid("runs must be at least 1".into()));
    }
    if methods.contains(&Method::Ppo) && opts.policy.is_none() {
        return Err(BenchError::MissingCheckpoint);
    }
    upmsp_core::scalarize(Default::default(), opts.alpha, opts.beta)?;
    let mut rows = Vec::new();
    for (name, inst) in instances {
        for &method in methods {
            let repeats = if method.is_stochastic() { runs } else { 1 };
            for run in 0..repeats {
                let run_seed = seed.wrapping_add(run as u64);
                let s = solve(inst, method, opts, run_seed)?;
                let valid = validate_schedule(inst, &s.schedule).is_empty();
                rows.push(ResultRow {
                    instance: name.clone(),
                    method: method.name().to_string(),
                    run,
                    seed: run_seed,
                    twt: s.objectives.twt,
                    tst: s.objectives.tst,
                    scalarized: s.objectives.scalarized(opts.alpha, opts.beta)?,
                    wall_ms: s.elapsed.as_secs_f64() * 1e3,
                    valid,
                });
            }
        }
    }
    Ok(BenchResults { rows })
}

impl BenchResults {
    pub fn all_valid(&self) -> bool {
        self.rows.iter().all(|r| r.valid)
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn summaries(&self) -> Vec<MethodSummary> {
        self.methods()
            .into_iter()
            .map(|method| {
                let rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.method == method).collect();
                let k = rows.len() as f64;
                MethodSummary {
                    rows: rows.len(),
                    avg_twt: rows.iter().map(|r| r.twt as f64).sum::<f64>() / k,
                    avg_tst: rows.iter().map(|r| r.tst as f64).sum::<f64>() / k,
                    avg_scalarized: rows.iter().map(|r| r.scalarized).sum::<f64>() / k,
                    avg_ms: rows.iter().map(|r| r.wall_ms).sum::<f64>() / k,
                    method,
                }
            })
            .collect()
    }

    pub fn points(&self) -> Vec<MethodPoint> {
        self.summaries()
            .into_iter()
            .map(|s| MethodPoint { method: s.method, avg_twt: s.avg_twt, avg_tst: s.avg_tst })
            .collect()
    }

    /// Per-instance scalarized value of `method`, averaged over runs, in
    /// instance order of first appearance.
    pub fn per_instance(&self, method: &str) -> Vec<(String, f64)> {
        let mut order: Vec<String> = Vec::new();
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            let e = acc.entry(r.instance.clone()).or_insert_with(|| {
                order.push(r.instance.clone());
                (0.0, 0)
            });
            e.0 += r.scalarized;
            e.1 += 1;
        }
        order
            .into_iter()
            .map(|name| {
                let (s, c) = acc[&name];
                (name, s / c as f64)
            })
            .collect()
    }

    /// Paired t-test of `a` against `b` over the instances both solved.
    pub fn compare(&self, a: &str, b: &str) -> Result<TTest> {
        let bv: BTreeMap<String, f64> = self.per_instance(b).into_iter().collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            self.per_instance(a).into_iter().filter_map(|(name, v)| bv.get(&name).map(|w| (v, *w))).unzip();
        paired_t_test(&xs, &ys)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(BenchResults { rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
        Self::from_csv(&text)
    }
}

/// CSV of the per-method aggregates.
pub fn summary_csv(summaries: &[MethodSummary]) -> String {
    let mut out = String::from("method,rows,avg_twt,avg_tst,avg_scalarized,avg_ms\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            s.method, s.rows, s.avg_twt, s.avg_tst, s.avg_scalarized, s.avg_ms
        ));
    }
    out
}
