use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use specshare::waterfill::waterfill;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn specshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specshare"))
        .args(args)
        .env_remove("SPECSHARE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

/// Copy of a shipped config with `edit` applied to its JSON.
fn edited(dir: &TempDir, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v = json(&configs().join(name));
    edit(&mut v);
    let path = dir.path().join(format!("edited_{name}"));
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn run_in(dir: &TempDir, sub: &str, args: &[&str]) -> (Output, PathBuf) {
    let out = dir.path().join(sub);
    let mut all = args.to_vec();
    all.extend(["--out", out.to_str().unwrap()]);
    (specshare(&all), out)
}

#[test]
fn decoupled_followers_water_fill_individually() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("decoupled_ne.json");
    let (o, out) = run_in(&dir, "ne", &["ne", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ne = json(&out.join("ne.json"));
    assert_eq!(ne["converged"], true);
    assert_eq!(ne["verify"]["is_ne"], true);

    let c = json(&cfg);
    let pu = [2.0, 3.0, 1.0];
    for (su, budget) in [(1usize, 4.0), (2, 2.0)] {
        let sigma: Vec<f64> = (0..3)
            .map(|f| {
                let g = |tx: usize| c["gains"][tx][su][f].as_f64().unwrap();
                (pu[f] * g(0) + c["network"]["noise"][su][f].as_f64().unwrap()) / g(su)
            })
            .collect();
        let want = waterfill(&sigma, budget).unwrap().powers;
        for f in 0..3 {
            let got = ne["powers"][su][f].as_f64().unwrap();
            assert!((got - want[f]).abs() < 1e-9, "su {su} f {f}: {got} vs {}", want[f]);
        }
    }
    let manifest = json(&out.join("manifest.json"));
    let listed: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["resolved_config.json", "ne.json", "powers.csv", "manifest.json"] {
        assert!(listed.contains(&f), "{f} missing from {listed:?}");
        assert!(out.join(f).exists());
    }
}

#[test]
fn closed_form_and_iterative_ensembles_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("symmetric_ensemble.json");
    let cfg = cfg.to_str().unwrap();
    let (a, out_a) = run_in(&dir, "cf", &["ne", "--config", cfg, "--realizations", "200", "--closed-form"]);
    let (b, out_b) = run_in(&dir, "it", &["ne", "--config", cfg, "--realizations", "200", "--iterative"]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let (ra, rb) = (json(&out_a.join("report.json")), json(&out_b.join("report.json")));
    assert_eq!(ra["algorithm"], "ne-closed-form");
    assert_eq!(rb["algorithm"], "ne-iterative");
    for u in 0..3 {
        for f in 0..3 {
            let x = ra["mean_powers"][u][f].as_f64().unwrap();
            let y = rb["mean_powers"][u][f].as_f64().unwrap();
            assert!((x - y).abs() <= 1e-6, "user {u} f {f}: {x} vs {y}");
        }
    }
    assert!(out_b.join("curve.csv").exists());
    assert_eq!(csv_rows(&out_a.join("realizations.csv")).len(), 200);
}

#[test]
fn negative_budget_is_a_config_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "decoupled_ne.json", |v| v["network"]["budgets"][1] = (-1.0).into());
    let (o, out) = run_in(&dir, "x", &["ne", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("budgets[1]"), "{err}");
    assert!(!out.join("ne.json").exists());
}

#[test]
fn malformed_json_reports_a_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"schema\": 1,\n  \"network\": [\n").unwrap();
    let o = specshare(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line "));
    let ok = specshare(&["validate", configs().join("step_fixed.json").to_str().unwrap()]);
    assert_eq!(code(&ok), 0);
}

#[test]
fn step_size_sets_the_exit_code() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("step_fixed.json");
    let (o, out) = run_in(&dir, "small", &["alg2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&out.join("summary.json"))["status"], "converged");

    let big = edited(&dir, "step_fixed.json", |v| v["schedule"]["eta"] = 0.9.into());
    let (o, out) = run_in(&dir, "big", &["alg2", "--config", big.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&out.join("summary.json"))["status"], "oscillating");

    let (o, _) = run_in(&dir, "async", &["alg3", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn iteration_cap_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "step_fixed.json", |v| v["schedule"]["max_outer"] = 5.into());
    let (o, _) = run_in(&dir, "cap", &["alg2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn infeasible_isr_exits_four() {
    let dir = TempDir::new().unwrap();
    let cfg = edited(&dir, "step_fixed.json", |v| v["network"]["isr_threshold"] = 1e-4.into());
    let (o, _) = run_in(&dir, "a2", &["alg2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let (o, _) = run_in(&dir, "se", &["se", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}

#[test]
fn single_pu_alg4_follows_unit_step_alg2() {
    let dir = TempDir::new().unwrap();
    let unit = edited(&dir, "step_fixed.json", |v| v["schedule"]["eta"] = 1.0.into());
    let (a, out_a) = run_in(&dir, "a2", &["alg2", "--config", unit.to_str().unwrap()]);
    let cfg = configs().join("step_fixed.json");
    let (b, out_b) = run_in(&dir, "a4", &["alg4", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&a), code(&b));
    let (ta, tb) = (csv_rows(&out_a.join("trace.csv")), csv_rows(&out_b.join("trace.csv")));
    let n = ta.len().min(tb.len());
    assert!(n > 9 * 20);
    for (x, y) in ta[..n].iter().zip(&tb[..n]) {
        assert_eq!(x[..3], y[..3]);
        let (p, q): (f64, f64) = (x[3].parse().unwrap(), y[3].parse().unwrap());
        assert!((p - q).abs() < 1e-6, "{x:?} vs {y:?}");
    }
}

#[test]
fn decimation_keeps_every_kth_iterate_and_the_last() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("step_fixed.json");
    let (_, full) = run_in(&dir, "full", &["alg2", "--config", cfg.to_str().unwrap()]);
    let (_, thin) = run_in(&dir, "thin", &["alg2", "--config", cfg.to_str().unwrap(), "--csv-decimate", "10"]);
    let iters = |p: &Path| {
        let mut v: Vec<usize> = csv_rows(&p.join("trace.csv")).iter().map(|r| r[0].parse().unwrap()).collect();
        v.dedup();
        v
    };
    let (a, b) = (iters(&full), iters(&thin));
    assert_eq!(b.last(), a.last());
    assert!(b[..b.len() - 1].iter().all(|i| i % 10 == 0));
    assert_eq!(b.len(), a.len().div_ceil(10) + usize::from((a.len() - 1) % 10 != 0));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("hierarchy_ensemble.json");
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_specshare"))
            .args(["alg2", "--config", cfg.to_str().unwrap(), "--realizations", "40", "--out", out.to_str().unwrap()])
            .env("SPECSHARE_THREADS", threads)
            .output()
            .unwrap();
        assert!(matches!(code(&o), 0 | 4), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(out);
    }
    for f in ["report.json", "realizations.csv", "curve.csv", "resolved_config.json"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_specshare"))
        .args(["validate", configs().join("step_fixed.json").to_str().unwrap()])
        .env("SPECSHARE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_figure_exits_one() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_in(&dir, "r", &["reproduce", "fig9"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig3-6"));
}

#[test]
fn small_reproduction_writes_summary_and_curves() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_in(&dir, "f8", &["reproduce", "fig8", "--realizations", "6", "--seed", "2"]);
    assert!(matches!(code(&o), 0 | 5));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["schema"], 1);
    assert_eq!(summary["figure"], "fig8");
    assert!(summary["checks"].as_array().unwrap().iter().any(|c| c["criterion"] == 9));
    assert!(out.join("fig8_alg4_spec.json").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("criterion 9"), "{stdout}");
}
