use qma_core::fields::{ScalarField, Snapshot, TorusGrid};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn qma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qma"))
        .args(args)
        .env_remove("QMA_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn fund_on_flat_chart_is_exact() {
    let o = qma(&["verify", "--suite", "fund", "--chart", "flat", "--points", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["command"], "verify");
    assert_eq!(v["result"]["summary"]["pass"], true);
    assert_eq!(v["result"]["summary"]["max_rel_residual"].as_f64(), Some(0.0));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["thresholds"]["fund"].as_f64().is_some());
}

#[test]
fn fund_on_eguchi_hanson_passes() {
    let o = qma(&["verify", "--suite", "fund", "--chart", "eh", "--points", "20", "--seed", "4"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["result"]["summary"]["max_rel_residual"].as_f64().unwrap() <= 1e-7);
    assert_eq!(v["seed"], 4);
}

#[test]
fn sign_flip_mutation_exits_2() {
    let o = qma(&["verify", "--suite", "delta", "--chart", "eh", "--points", "4", "--mutate", "sign-flip"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "suite = fund\nwavelength = 3\n").unwrap();
    let o = qma(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key 'wavelength'"));

    assert_eq!(code(&qma(&["verify", "--suite", "nope"])), 1);
    assert_eq!(code(&qma(&["verify", "--suite", "pre", "--mutate", "dehyper"])), 1);
    assert_eq!(code(&qma(&["solve", "--grid", "7"])), 1);
    assert_eq!(code(&qma(&["solve", "--f", "random:x"])), 1);
    assert_eq!(code(&qma(&["solve", "--f", "/nonexistent/f.snap"])), 1);
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_qma"))
        .args(["verify", "--suite", "fund"])
        .env("QMA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# fund on flat\nsuite = fund\nchart = flat\npoints = 3\nseed = 9\n").unwrap();
    let o = qma(&["verify", "--config", cfg.to_str().unwrap(), "--seed", "11"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["result"]["points"].as_array().unwrap().len(), 3);
}

#[test]
fn zero_density_solves_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z");
    let o = qma(&["solve", "--f", "zero", "--grid", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = read_json(&out.join("solve.json"));
    assert_eq!(r["result"]["converged"], true);
    assert_eq!(r["result"]["b"].as_f64(), Some(0.0));
    assert_eq!(r["result"]["phi_sup_norm"].as_f64(), Some(0.0));
    let phi = Snapshot::load(&out.join("phi.snap")).unwrap();
    assert_eq!((phi.n, phi.size), (1, 8));
    assert!(phi.components[0].iter().all(|v| *v == 0.0));
    assert!(out.join("run.json").exists());
}

#[test]
fn manufactured_density_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = qma(&["solve", "--f", "manufactured", "--grid", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = read_json(&out.join("solve.json"));
    assert!(r["result"]["recovery_error"].as_f64().unwrap() <= 1e-8);
    assert!(r["result"]["residual_11"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn snapshot_density_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TorusGrid::new(1, 8).unwrap();
    let c = 0.2;
    let f = ScalarField::constant(&grid, c);
    let snap = dir.path().join("f.snap");
    Snapshot::from_fields(&[&f]).unwrap().save(&snap).unwrap();
    let out = dir.path().join("s");
    let o = qma(&["solve", "--f", snap.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("solve.json"));
    assert!((r["result"]["b"].as_f64().unwrap() + c).abs() <= 1e-10);
    assert_eq!(r["result"]["grid"], 8);
    let o = qma(&["solve", "--f", snap.to_str().unwrap(), "--grid", "16"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn stage_failure_exits_3_and_keeps_last_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    // one Newton step per stage cannot reach the tolerance
    std::fs::write(&cfg, "max_newton = 1\n").unwrap();
    let out = dir.path().join("f");
    let o = qma(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--f",
        "random:0.3",
        "--grid",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("solve.json"));
    assert!(r["result"]["error"].is_string());
    assert_eq!(r["result"]["converged"], false);
    assert!(Snapshot::load(&out.join("phi.snap")).is_ok());
}

#[test]
fn zero_path_has_constant_trace_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let o = qma(&["path", "--f", "zero", "--grid", "8", "--steps", "4", "--monitor", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(out.join("monitor.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "t,sup_Q,tr_max,phi_inf,b");
    assert_eq!(rows.len(), 6);
    for row in &rows[1..] {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[1..], [2.0, 2.0, 0.0, 0.0]);
    }
    assert_eq!(std::fs::read_to_string(out.join("path.csv")).unwrap().lines().count(), 6);
}

#[test]
fn refined_manufactured_path_reports_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = qma(&["path", "--f", "manufactured", "--grid", "8", "--refine", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out.join("path.json"));
    let est = &r["result"]["estimate"];
    for s in est["states"].as_array().unwrap() {
        assert!(s["c_emp"].as_f64().is_some());
    }
    let cmp = &r["result"]["comparison"];
    assert_eq!((cmp["coarse_grid"].as_u64(), cmp["fine_grid"].as_u64()), (Some(8), Some(16)));
    assert_eq!(cmp["a"], est["a"]);
    assert!(cmp["variation"].as_f64().unwrap() < cmp["limit"].as_f64().unwrap());
    assert_eq!(cmp["pass"], true);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = qma(&["solve", "--f", "random:0.2", "--grid", "8", "--seed", "3", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        (
            std::fs::read(out.join("solve.json")).unwrap(),
            std::fs::read(out.join("phi.snap")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
    let v = |seed: &str| qma(&["verify", "--suite", "delta", "--chart", "eh", "--points", "3", "--seed", seed]).stdout;
    assert_eq!(v("5"), v("5"));
    assert_ne!(v("5"), v("6"));
}
