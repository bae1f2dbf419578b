//! `upmsp` command-line tool. Results go to files or stdout; wall-clock
//! timings go to stderr so that outputs of deterministic commands are
//! byte-identical across runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use upmsp_bench::{parse_methods, pareto_report, run_benchmark, solve, summary_csv, BenchResults, Method, SolveOptions};
use upmsp_core::atcsr::AtcsrParams;
use upmsp_core::ga::GaParams;
use upmsp_core::instance_gen::{generate_suite, parameter_grid, write_suite, Manifest};
use upmsp_core::{GenParams, ObjectiveValues, ProblemInstance, Schedule};
use upmsp_nn::PolicyParams;
use upmsp_ppo::{curve_csv, train_with, InstanceSampler, TrainConfig};

#[derive(Parser)]
#[command(name = "upmsp", about = "Unrelated parallel machine scheduling laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance suite with a manifest.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 0.4)]
        tau: f64,
        #[arg(long, default_value_t = 0.6)]
        range: f64,
        #[arg(long, default_value_t = 0.25)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Solve one instance and print the schedule as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 2.0)]
        k1: f64,
        #[arg(long, default_value_t = 0.5)]
        k2: f64,
        #[arg(long, default_value_t = 1.0)]
        k3: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 60)]
        pop: usize,
        #[arg(long, default_value_t = 1000)]
        budget_ms: u64,
        /// GA generation cap; with a generous time budget this makes GA runs reproducible.
        #[arg(long)]
        max_generations: Option<usize>,
        /// GA fitness weight on TWT; by default chosen to match --alpha/--beta.
        #[arg(long)]
        alpha_fitness: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the graph policy with PPO on one problem size.
    Train {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 200_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict the generator grid to these levels (default: all).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 8)]
        actors: usize,
        #[arg(long, default_value_t = 2048)]
        rollout: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        /// Held-out manifest whose instance seeds are never used for training.
        #[arg(long)]
        exclude: Option<PathBuf>,
        /// Output directory for `curve.csv`, `policy.json` and `config.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run methods over a suite and write per-instance results.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "atcsr,ga")]
        methods: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        budget_ms: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-method Pareto points and dominance verdicts from a results file.
    Pareto {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    method: &'a str,
    objectives: ObjectiveValues,
    scalarized: f64,
    schedule: &'a Schedule,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ProblemInstance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_policy(path: Option<&PathBuf>) -> Result<Option<PolicyParams>> {
    path.map(|p| PolicyParams::load(p).with_context(|| format!("loading checkpoint {}", p.display()))).transpose()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { n, m, tau, range, beta, delta, lambda, count, seed, out_dir } => {
            let cell = GenParams {
                n,
                m,
                tau,
                range_r: range,
                setup_ratio_beta: beta,
                elig_density_delta: delta,
                lambda_arrival: lambda,
                seed: 0,
            };
            cell.validate()?;
            let suite = generate_suite(&[cell], count, seed)?;
            write_suite(&suite, &out_dir)?;
            eprintln!("wrote {} instances to {}", suite.len(), out_dir.display());
        }
        Command::Solve {
            instance,
            method,
            k1,
            k2,
            k3,
            alpha,
            beta,
            pop,
            budget_ms,
            max_generations,
            alpha_fitness,
            seed,
            checkpoint,
            out,
        } => {
            let inst = load_instance(&instance)?;
            let method: Method = method.parse()?;
            let mut ga = GaParams { population: pop, budget_ms, ..GaParams::default() };
            if let Some(g) = max_generations {
                ga.max_generations = g;
            }
            if let Some(a) = alpha_fitness {
                ga.alpha_fitness = a;
            }
            let opts = SolveOptions {
                alpha,
                beta,
                atcsr: AtcsrParams { k1, k2, k3 },
                ga,
                match_weights: alpha_fitness.is_none(),
                policy: load_policy(checkpoint.as_ref())?,
            };
            let s = solve(&inst, method, &opts, seed)?;
            let violations = upmsp_core::validate_schedule(&inst, &s.schedule);
            if !violations.is_empty() {
                bail!("{method} produced an infeasible schedule: {}", violations[0]);
            }
            let body = SolveOutput {
                method: method.name(),
                objectives: s.objectives,
                scalarized: s.objectives.scalarized(alpha, beta)?,
                schedule: &s.schedule,
            };
            let text = serde_json::to_string_pretty(&body)? + "\n";
            match out {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
            eprintln!("{method}: {:.3} ms", s.elapsed.as_secs_f64() * 1e3);
        }
        Command::Train { n, m, steps, seed, tau, range, beta, delta, actors, rollout, lr, exclude, out } => {
            let keep = |level: Option<f64>, v: f64| level.is_none_or(|l| (l - v).abs() < 1e-12);
            let mut cells: Vec<GenParams> = parameter_grid(n, m)
                .into_iter()
                .filter(|c| {
                    keep(tau, c.tau)
                        && keep(range, c.range_r)
                        && keep(beta, c.setup_ratio_beta)
                        && keep(delta, c.elig_density_delta)
                })
                .collect();
            if cells.is_empty() {
                // Levels off the design grid: train on exactly the requested cell.
                cells.push(GenParams {
                    n,
                    m,
                    tau: tau.unwrap_or(0.4),
                    range_r: range.unwrap_or(0.6),
                    setup_ratio_beta: beta.unwrap_or(0.25),
                    elig_density_delta: delta.unwrap_or(1.0),
                    ..GenParams::default()
                });
            }
            let mut sampler = InstanceSampler::new(cells)?;
            if let Some(path) = exclude {
                let manifest = Manifest::load(&path)?;
                sampler = sampler.excluding(manifest.instances.iter().map(|e| e.seed));
            }
            let cfg = TrainConfig {
                total_steps: steps,
                seed,
                actors,
                rollout_steps: rollout,
                learning_rate: lr,
                minibatch: TrainConfig::default().minibatch.min(rollout),
                ..TrainConfig::default()
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let started = std::time::Instant::now();
            let result = train_with(&sampler, &cfg, |report, _| {
                let r = &report.row;
                eprintln!(
                    "update {:>4}  steps {:>8}  return {:>10.1}  entropy {:.3}  {:.1}s",
                    r.update,
                    r.steps,
                    r.mean_return.unwrap_or(f64::NAN),
                    report.entropy,
                    started.elapsed().as_secs_f64()
                );
                Ok(())
            })?;
            write(&out.join("curve.csv"), &curve_csv(&result.curve))?;
            result.params.save(&out.join("policy.json"))?;
            write(&out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
        }
        Command::Bench { suite, methods, alpha, beta, runs, seed, budget_ms, checkpoint, out } => {
            let manifest = Manifest::load(&suite)?;
            let instances = manifest.load_instances(&suite)?;
            let methods = parse_methods(&methods)?;
            let opts = SolveOptions {
                alpha,
                beta,
                ga: GaParams { budget_ms, ..GaParams::default() },
                policy: load_policy(checkpoint.as_ref())?,
                ..SolveOptions::default()
            };
            let results = run_benchmark(&instances, &methods, &opts, runs, seed)?;
            write(&out, &results.to_csv()?)?;
            print!("{}", summary_csv(&results.summaries()));
            let names = results.methods();
            for (i, a) in names.iter().enumerate() {
                for b in &names[i + 1..] {
                    match results.compare(a, b) {
                        Ok(t) => println!("t-test {a} vs {b}: mean diff {:.3}, t {:.4}, p {:.3e}", t.mean_diff, t.t, t.p),
                        Err(e) => println!("t-test {a} vs {b}: {e}"),
                    }
                }
            }
            if !results.all_valid() {
                let bad = results.rows.iter().filter(|r| !r.valid).count();
                eprintln!("{bad} schedules failed validation");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Pareto { input, out } => {
            let results = BenchResults::load(&input)?;
            let report = pareto_report(&results.points())?;
            write(&out, &report.to_csv())?;
            for line in report.verdict_lines() {
                println!("{line}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
