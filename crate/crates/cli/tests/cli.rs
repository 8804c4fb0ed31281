use std::path::Path;
use std::process::{Command, Output};

use mialab::dp;

const SMALL: &str = r#"{
  "data": { "kind": "synthetic", "preset": "two_gaussians", "n_per_component": 60 },
  "split": { "kind": "random" },
  "n": 20,
  "epsilon_grid": [1, "inf"],
  "repetitions": 2,
  "attacks": ["average_threshold", "optimal_threshold"],
  "hidden": [4],
  "train": { "epochs": 2, "batch_size": 10 },
  "seed": 3
}"#;

fn mialab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mialab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_small(dir: &Path, out: &str) -> Output {
    let cfg = write_config(dir, SMALL);
    let out = dir.join(out);
    mialab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()])
}

#[test]
fn run_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(dir.path(), "out");
    assert!(o.status.success(), "{}", stderr(&o));
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    // repetitions × |ε| × |attacks| × scenarios
    assert_eq!(results.lines().count() - 1, 2 * 2 * 2 * 2);
    for name in ["summary.csv", "bounds.csv", "manifest.json"] {
        assert!(dir.path().join("out").join(name).exists(), "{name} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_small(dir.path(), "a").status.success());
    assert!(run_small(dir.path(), "b").status.success());
    for name in ["results.csv", "summary.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn unknown_attack_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"optimal_threshold\"", "\"psychic\""));
    let out = dir.path().join("out");
    let o = mialab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("config error"), "{err}");
    assert!(err.contains("attacks"), "{err}");
    assert!(!out.join("results.csv").exists());
}

#[test]
fn bounds_at_zero_are_zero_and_keep_order() {
    let o = mialab(&["bounds", "--epsilons", "0", "--delta", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(values, ["0", "0", "0"]);

    let o = mialab(&["bounds", "--epsilons", "10,1,0.1"]);
    let eps: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .step_by(3)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(eps, ["10", "1", "0.1"]);
}

#[test]
fn account_matches_library() {
    let o = mialab(&["account", "--q", "0.01", "--steps", "1000", "--sigma", "1.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let c = dp::account(0.01, 1.1, 1000, dp::DEFAULT_DELTA).unwrap();
    assert_eq!(v["epsilon"].as_f64().unwrap(), c.epsilon);
    assert_eq!(v["order"].as_f64().unwrap(), c.order);

    let o = mialab(&["account", "--q", "0.01", "--steps", "1000", "--target-epsilon", "1"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["epsilon"].as_f64().unwrap() <= 1.0);
    assert!(v["sigma"].as_f64().unwrap() > 0.0);
}

#[test]
fn split_writes_pools() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("split");
    let o = mialab(&["split", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pools = std::fs::read_to_string(out.join("pools.csv")).unwrap();
    let ids = std::fs::read_to_string(out.join("pool_members.csv")).unwrap();
    let total: usize = pools
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(ids.lines().count() - 1, total);
}
