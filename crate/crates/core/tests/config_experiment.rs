use std::path::Path;

use cogrelay_core::experiment::capacity_doubling_shift;
use cogrelay_core::{
    link_budget, load_config, parse_config, run_single, run_sweep, AccessPolicy, Error, ExperimentSpec, Method,
    OptimizerOptions, SystemConfig, Target,
};

fn repo() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

fn fields(err: Error) -> Vec<String> {
    match err {
        Error::InvalidConfig(f) => f.fields().map(str::to_string).collect(),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn shipped_default_config_is_the_reference_point() {
    let cfg = load_config(&repo().join("configs/default.toml")).unwrap();
    let d = SystemConfig::default();
    assert_eq!(cfg.pu_arrival_rate, 0.5);
    assert_eq!((cfg.pu_queue_capacity, cfg.relay_queue_capacity), (100, 10));
    assert_eq!(cfg.distances, d.distances);
    for (a, b) in [
        (cfg.mean_gains.pd, 0.1),
        (cfg.mean_gains.ps, 0.1),
        (cfg.mean_gains.sd, 0.1),
        (cfg.mean_gains.sr, 0.1),
    ] {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((link_budget(&cfg).unwrap().theta_pd - link_budget(&d).unwrap().theta_pd).abs() < 1e-15);
}

#[test]
fn out_of_range_beta_is_named() {
    let f = fields(parse_config("beta = 1.5\n", "t").unwrap_err());
    assert_eq!(f, ["beta"]);
}

#[test]
fn loss_threshold_defaults_to_one_percent() {
    assert_eq!(parse_config("pu_arrival_rate = 0.2\n", "t").unwrap().loss_threshold, 0.01);
}

#[test]
fn several_violations_are_all_reported() {
    let f = fields(parse_config("alpha = -1\ndist_sd = 0\nloss_threshold = 2\n", "t").unwrap_err());
    for name in ["alpha", "dist_sd", "loss_threshold"] {
        assert!(f.iter().any(|x| x == name), "{f:?}");
    }
}

#[test]
fn large_capacity_stands_in_for_infinite_queue() {
    for lam in [0.1, 0.3, 0.5, 0.7] {
        let shift = capacity_doubling_shift(lam, 1_000_000, 0.01).unwrap();
        assert!(shift < 1e-9, "λ={lam}: {shift}");
    }
}

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::parse(text, "test.toml", Path::new("/tmp")).unwrap()
}

#[test]
fn idle_primary_single_point_gives_full_su_rate() {
    let s = spec("sweep_variable = \"lambda_p\"\nsweep_values = [0.0]\nmethods = [\"lp\"]\noutput = \"x.csv\"\n");
    let t = run_sweep(&s).unwrap();
    assert_eq!(t.rows.len(), 1);
    let theta_sr = link_budget(&SystemConfig::default()).unwrap().theta_sr;
    assert!((t.rows[0].mu_s - theta_sr).abs() < 1e-12);
}

#[test]
fn every_point_appears_once_per_method_in_order() {
    let s = spec(
        "sweep_variable = \"lambda_p\"\nsweep_values = [0.85, 0.2, 0.5]\nmethods = [\"st\", \"lp\", \"cpt\"]\n\
         output = \"x.csv\"\n[base]\nrelay_queue_capacity = 3\npu_queue_capacity = 20\n",
    );
    let t = run_sweep(&s).unwrap();
    let keys: Vec<(f64, Method)> = t.rows.iter().map(|r| (r.value, r.method)).collect();
    let mut want = Vec::new();
    for v in [0.2, 0.5, 0.85] {
        for m in [Method::Lp, Method::Cpt, Method::St] {
            want.push((v, m));
        }
    }
    assert_eq!(keys, want);
    // Overloaded point is kept as an explicit infeasible row.
    for r in t.rows.iter().filter(|r| r.value == 0.85) {
        assert!(!r.feasible);
        assert_eq!(r.mu_s, 0.0);
    }
    let csv = t.to_csv();
    assert!(csv.starts_with("# cogrelay "));
    assert_eq!(csv.lines().nth(1).unwrap(), "lambda_p,method,mu_s,mu_p,mu_p_bar,feasible");
    assert_eq!(csv.lines().count(), 2 + 9);
    assert!(!csv.contains('\r'));
}

#[test]
fn invalid_specs_name_the_offending_field() {
    let bad = [
        ("sweep_variable = \"beta\"\nsweep_values = [0.5, 1.5]\nmethods = [\"lp\"]\noutput = \"x\"\n", "sweep_values"),
        ("sweep_variable = \"n_s\"\nsweep_values = [2.5]\nmethods = [\"lp\"]\noutput = \"x\"\n", "sweep_values"),
        ("sweep_variable = \"lambda_p\"\nsweep_values = []\nmethods = [\"lp\"]\noutput = \"x\"\n", "sweep_values"),
        ("sweep_variable = \"lambda_p\"\nsweep_values = [0.1]\nmethods = []\noutput = \"x\"\n", "methods"),
        ("sweep_variable = \"gamma\"\nsweep_values = [0.1]\nmethods = [\"lp\"]\noutput = \"x\"\n", "sweep_variable"),
    ];
    for (text, field) in bad {
        let err = ExperimentSpec::parse(text, "t.toml", Path::new("/tmp")).unwrap_err();
        let f = fields(err);
        assert!(f.iter().any(|x| x == field), "{text}: {f:?}");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let s = spec("sweep_variable = \"lambda_p\"\nsweep_values = [0.0]\nmethods = [\"st\"]\noutput = \"x.csv\"\n");
    let err = run_sweep(&s).unwrap().write_csv(&blocker.join("sub/out.csv")).unwrap_err();
    assert_eq!(err.kind(), "io");
}

#[test]
fn all_zero_policy_earns_only_in_empty_state() {
    let cfg = SystemConfig::default();
    let r = run_single(&cfg, &Target::Policy(AccessPolicy::zeros(10)), None).unwrap();
    let theta_sr = link_budget(&cfg).unwrap().theta_sr;
    assert!((r.mu_s - theta_sr * r.evaluation.relay_state.occupancy[0]).abs() < 1e-12);
}

#[test]
fn step_report_names_its_threshold() {
    let cfg = SystemConfig::default();
    let r = run_single(&cfg, &Target::Method(Method::St, OptimizerOptions::default()), None).unwrap();
    let th = r.threshold.expect("step method reports a threshold");
    assert_eq!(r.policy, AccessPolicy::step(10, th));
    let direct = cogrelay_core::st_policy(&cfg, &OptimizerOptions::default()).unwrap();
    assert_eq!(r.mu_s, direct.mu_s());
}

#[test]
fn simulated_report_has_one_entry_per_seed() {
    let cfg = SystemConfig {
        relay_queue_capacity: 3,
        ..SystemConfig::default()
    };
    let r = run_single(&cfg, &Target::Policy(AccessPolicy::ones(3)), Some((50_000, &[3, 4]))).unwrap();
    let c = r.comparison.unwrap();
    assert_eq!(c.runs.iter().map(|s| s.seed).collect::<Vec<_>>(), [3, 4]);
    assert_ne!(c.runs[0].mu_s.gap, c.runs[1].mu_s.gap);
}
