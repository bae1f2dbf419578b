use std::path::Path;
use std::process::{Command, Output};

use upmsp_bench::BenchResults;

fn upmsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upmsp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = upmsp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, n: &str, count: &str) {
    ok(&["gen", "--n", n, "--m", "2", "--count", count, "--seed", "5", "--out-dir", dir.to_str().unwrap()]);
}

#[test]
fn bench_then_pareto() {
    let tmp = tempfile::tempdir().unwrap();
    let suite = tmp.path().join("suite");
    gen(&suite, "5", "2");
    let manifest = suite.join("manifest.json");
    let results = tmp.path().join("results.csv");
    let stdout = ok(&[
        "bench", "--suite", manifest.to_str().unwrap(), "--methods", "atcsr,exact,random", "--runs", "2",
        "--out", results.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("method,rows,avg_twt,avg_tst,avg_scalarized,avg_ms\n"));
    assert!(stdout.contains("t-test atcsr vs exact"));

    let res = BenchResults::load(&results).unwrap();
    // Deterministic methods once per instance, random twice.
    assert_eq!(res.rows.len(), 2 + 2 + 4);
    assert!(res.all_valid());
    let exact = res.per_instance("exact");
    for (name, a) in res.per_instance("atcsr") {
        let e = exact.iter().find(|(n, _)| *n == name).unwrap().1;
        assert!(e <= a, "{name}: exact {e} > atcsr {a}");
    }
    for s in res.summaries() {
        let rows: Vec<_> = res.rows.iter().filter(|r| r.method == s.method).collect();
        let mean = rows.iter().map(|r| r.scalarized).sum::<f64>() / rows.len() as f64;
        assert!((s.avg_scalarized - mean).abs() <= 1e-12 * mean.max(1.0));
    }

    let pareto = tmp.path().join("pareto.csv");
    ok(&["pareto", "--in", results.to_str().unwrap(), "--out", pareto.to_str().unwrap()]);
    let text = std::fs::read_to_string(&pareto).unwrap();
    assert!(text.starts_with("method,avg_tst,avg_twt,dominates,nondominated\natcsr,"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn solve_prints_a_valid_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "6", "1");
    let inst = tmp.path().join("inst_c000_r000.json");
    for method in ["atcsr", "exact", "random"] {
        let text = ok(&["solve", "--instance", inst.to_str().unwrap(), "--method", method]);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["method"], method);
        let twt = v["objectives"]["twt"].as_f64().unwrap();
        let tst = v["objectives"]["tst"].as_f64().unwrap();
        assert_eq!(v["scalarized"].as_f64().unwrap(), twt + tst);
    }
    let text = ok(&[
        "solve", "--instance", inst.to_str().unwrap(), "--method", "ga", "--budget-ms", "100000", "--max-generations",
        "20", "--pop", "20",
    ]);
    assert!(text.contains("\"ga\""));
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "4", "1");
    let inst = tmp.path().join("inst_c000_r000.json");
    let manifest = tmp.path().join("manifest.json");
    let out = upmsp(&["solve", "--instance", inst.to_str().unwrap(), "--method", "ppo"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
    let out = upmsp(&[
        "bench", "--suite", manifest.to_str().unwrap(), "--methods", "ppo", "--out",
        tmp.path().join("r.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let out = upmsp(&["solve", "--instance", inst.to_str().unwrap(), "--method", "tabu"]);
    assert!(!out.status.success());
    let big = tmp.path().join("big");
    gen(&big, "9", "1");
    let out = upmsp(&["solve", "--instance", big.join("inst_c000_r000.json").to_str().unwrap(), "--method", "exact"]);
    assert!(!out.status.success());
}

#[test]
fn trained_checkpoint_drives_ppo() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), "5", "2");
    let run = tmp.path().join("run");
    ok(&[
        "train", "--n", "5", "--m", "2", "--steps", "128", "--actors", "2", "--rollout", "64", "--tau", "0.4",
        "--exclude", tmp.path().join("manifest.json").to_str().unwrap(), "--out", run.to_str().unwrap(),
    ]);
    let curve = std::fs::read_to_string(run.join("curve.csv")).unwrap();
    assert!(curve.starts_with("update,steps,mean_return,mean_twt,mean_tst,lr\n"));
    assert_eq!(curve.lines().count(), 3);
    let results = tmp.path().join("r.csv");
    ok(&[
        "bench", "--suite", tmp.path().join("manifest.json").to_str().unwrap(), "--methods", "ppo,atcsr",
        "--checkpoint", run.join("policy.json").to_str().unwrap(), "--out", results.to_str().unwrap(),
    ]);
    assert_eq!(BenchResults::load(&results).unwrap().rows.len(), 4);
}
