use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn deva(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deva"))
        .args(args)
        .output()
        .expect("spawn deva")
}

fn config(optimizer: &str, lr: f64) -> Value {
    json!({
        "problem": {"kind": "trace_quadratic_het", "dim": 9},
        "optimizer": {"kind": optimizer, "lr": lr},
        "steps": 30,
        "seeds": [0, 1, 2],
        "log_every": 10
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("deva_sinf", 1e-2));
    let out = dir.path().join("out");
    let o = deva(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let csv = fs::read_to_string(out.join("trace_deva_sinf_het.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("step,median_loss,q25_loss,q75_loss,median_hnorm,q25_hnorm,q75_hnorm")
    );
    let steps: Vec<usize> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(steps, [1, 10, 20, 30]);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], "1");
    assert_eq!(summary["library_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(summary["seeds_ok"], 3);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let mut unknown = config("adam", 1e-3);
    unknown["optimizer"]["momentum"] = json!(0.9);
    let negative_lr = config("adam", -1.0);
    let mut no_steps = config("adam", 1e-3);
    no_steps["steps"] = json!(0);
    let mut vector_muon = config("muon", 1e-3);
    vector_muon["problem"] = json!({"kind": "vector_quadratic", "dim": 4});

    for (i, bad) in [unknown, negative_lr, no_steps, vector_muon]
        .iter()
        .enumerate()
    {
        let cfg = write(dir.path(), &format!("bad{i}.json"), bad);
        let o = deva(&["run", "--config", &cfg, "--out", out]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    let o = deva(&["run", "--config", garbage.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = deva(&[
        "run",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        "unused",
    ]);
    assert_eq!(o.status.code(), Some(4));

    let cfg = write(dir.path(), "c.json", &config("gd", 1e-4));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let o = deva(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn divergence_in_every_seed_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("gd", 1e3);
    cfg["steps"] = json!(400);
    cfg["schedule"] = json!({"kind": "constant"});
    let cfg = write(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    let o = deva(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}

#[test]
fn sweep_reports_every_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &config("deva_linf", 1e-3));
    let o = deva(&["sweep", "--config", &cfg, "--lr-grid", "0.001,0.003,0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
    assert_eq!(stdout.lines().filter(|l| l.starts_with('*')).count(), 1);
}

#[test]
fn compare_ranks_configs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &config("deva_sinf", 1e-2));
    let b = write(dir.path(), "b.json", &config("muon", 1e-2));
    let out = dir.path().join("cmp");
    let o = deva(&[
        "compare",
        "--configs",
        &a,
        &b,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with(" 1."));
    assert!(out.join("deva_sinf_het/trace_deva_sinf_het.csv").exists());
    assert!(out.join("muon_het/summary.json").exists());
}

#[test]
fn check_prints_one_line_per_oracle() {
    let o = deva(&["check", "--seed", "3"]);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 10);
    assert!(stdout
        .lines()
        .all(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")));
    let expected = if stdout.contains("FAIL ") { 1 } else { 0 };
    assert_eq!(o.status.code(), Some(expected));
}
