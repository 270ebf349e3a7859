use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogrelay")).args(args).output().unwrap()
}

fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn repo(rel: &str) -> String {
    format!("{}/../../{rel}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn optimize_prints_json_report() {
    let out = run(&["optimize", "--method", "st", "--set", "relay_queue_capacity=4", "--json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "st");
    assert!(v["threshold"].is_u64());
    assert!(v["mu_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn evaluate_all_zero_policy() {
    let out = run(&["evaluate", "--constant", "0", "--json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let pi0 = v["evaluation"]["relay_state"]["occupancy"][0].as_f64().unwrap();
    let mu_s = v["mu_s"].as_f64().unwrap();
    assert!((mu_s - 0.653_993_668_731_022 * pi0).abs() < 1e-12);
}

#[test]
fn simulate_with_two_seeds_reports_both() {
    let out = run(&[
        "simulate", "--constant", "1", "--set", "relay_queue_capacity=2", "--slots", "20000", "--seeds", "1,2", "--json",
    ]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let runs = v["comparison"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[1]["seed"], 2);
}

#[test]
fn invalid_config_exits_nonzero_with_field_list() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "beta = 1.5\nalpha = 2\n").unwrap();
    let v = error_line(&run(&["validate", "--config", path.to_str().unwrap()]));
    assert_eq!(v["error"], "invalid_config");
    let fields: Vec<&str> = v["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"beta") && fields.contains(&"alpha"), "{fields:?}");
}

#[test]
fn syntax_error_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "beta = = 1\n").unwrap();
    let v = error_line(&run(&["validate", "--config", path.to_str().unwrap()]));
    assert_eq!(v["error"], "parse");
}

#[test]
fn missing_policy_is_a_usage_error() {
    assert_eq!(error_line(&run(&["evaluate"]))["error"], "usage");
}

#[test]
fn validate_normalizes_db_gains() {
    let out = run(&["validate", "--config", &repo("configs/default.toml")]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gain_pd = 0.1"), "{text}");
    assert!(!text.contains("_db"));
}

#[test]
fn repeated_sweeps_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = repo("experiments/single_point_check.toml");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = run(&["sweep", "--spec", &spec, "--output", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (x, y) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with("sim_mu_s,sim_mu_p,gap_mu_s,gap_mu_p"));
    assert_eq!(text.lines().count(), 2 + 9);
}

#[test]
fn missing_spec_is_an_io_error() {
    let v = error_line(&run(&["sweep", "--spec", "/nonexistent/spec.toml"]));
    assert_eq!(v["error"], "io");
    assert!(!Path::new("/nonexistent").exists());
}
