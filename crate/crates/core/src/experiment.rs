//! Parameter sweeps and single-point reports.
//!
//! An experiment file is TOML:
//!
//! ```toml
//! base_config = "../configs/default.toml"   # optional, relative to this file
//! sweep_variable = "lambda_p"
//! sweep_values = [0.1, 0.2]                 # or sweep_range = { start, stop, count }
//! methods = ["lp", "cpt", "st"]
//! output = "out.csv"                        # relative to this file
//!
//! [base]                                    # overrides on top of base_config
//! relay_queue_capacity = 10
//!
//! [simulate]                                # optional
//! slots = 100000
//! seeds = [1, 2]
//! ```

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Table;

use crate::config::{self, db_to_linear};
use crate::error::{Error, FieldErrors, Result};
use crate::link::SystemConfig;
use crate::policy::{optimize, Method, OptimizationResult, OptimizerOptions, SearchMode};
use crate::queue::{evaluate_policy, min_departure_rate, AccessPolicy, MinRate, PolicyEvaluation};
use crate::sim::{compare, simulate_with, ComparisonReport, SimOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    LambdaP,
    NP,
    NS,
    /// PU-to-relay distance with the relay kept on the PU link:
    /// `dist_sd = dist_sr = dist_pd - r_ps`.
    RPs,
    Beta,
    Alpha,
    /// P→D mean gain in dB.
    SigmaPd,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::LambdaP => "lambda_p",
            SweepVariable::NP => "n_p",
            SweepVariable::NS => "n_s",
            SweepVariable::RPs => "r_ps",
            SweepVariable::Beta => "beta",
            SweepVariable::Alpha => "alpha",
            SweepVariable::SigmaPd => "sigma_pd",
        }
    }

    /// Returns `base` with the variable set to `value`.
    pub fn apply(self, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(sweep_error(self, format!("{v} is not a positive integer")))
            }
        };
        match self {
            SweepVariable::LambdaP => cfg.pu_arrival_rate = value,
            SweepVariable::NP => cfg.pu_queue_capacity = count(value)?,
            SweepVariable::NS => cfg.relay_queue_capacity = count(value)?,
            SweepVariable::RPs => {
                let rest = cfg.distances.pd - value;
                if !(value > 0.0 && rest > 0.0) {
                    return Err(sweep_error(
                        self,
                        format!("{value} must lie strictly between 0 and dist_pd = {}", cfg.distances.pd),
                    ));
                }
                cfg.distances.ps = value;
                cfg.distances.sd = rest;
                cfg.distances.sr = rest;
            }
            SweepVariable::Beta => cfg.beta = value,
            SweepVariable::Alpha => cfg.alpha = value,
            SweepVariable::SigmaPd => cfg.mean_gains.pd = db_to_linear(value),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep_error(var: SweepVariable, message: String) -> Error {
    let mut errs = FieldErrors::default();
    errs.push("sweep_values", format!("{}: {message}", var.as_str()));
    Error::InvalidConfig(errs)
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda_p" => SweepVariable::LambdaP,
            "n_p" => SweepVariable::NP,
            "n_s" => SweepVariable::NS,
            "r_ps" => SweepVariable::RPs,
            "beta" => SweepVariable::Beta,
            "alpha" => SweepVariable::Alpha,
            "sigma_pd" => SweepVariable::SigmaPd,
            other => {
                let mut errs = FieldErrors::default();
                errs.push("sweep_variable", format!("unknown variable {other:?}"));
                return Err(Error::InvalidConfig(errs));
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub slots: u64,
    pub seeds: Vec<u64>,
    pub warmup: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub base: SystemConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub methods: Vec<Method>,
    pub simulate: Option<SimulateSpec>,
    pub output_path: PathBuf,
    pub optimizer: OptimizerOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    start: f64,
    stop: f64,
    count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    slots: u64,
    #[serde(default)]
    seeds: Vec<u64>,
    warmup: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    base_config: Option<PathBuf>,
    #[serde(default)]
    base: Table,
    sweep_variable: String,
    sweep_values: Option<Vec<f64>>,
    sweep_range: Option<RawRange>,
    methods: Vec<String>,
    output: PathBuf,
    grid_points: Option<usize>,
    search_mode: Option<String>,
    simulate: Option<RawSimulate>,
}

/// `count` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| {
                if k == count - 1 {
                    stop
                } else {
                    start + (stop - start) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

impl ExperimentSpec {
    /// Parses spec text; relative paths resolve against `dir`.
    pub fn parse(text: &str, origin: &str, dir: &Path) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.into(),
            message: e.to_string().trim_end().to_string(),
        })?;
        let mut table = match &raw.base_config {
            Some(p) => config::read_table(&dir.join(p))?,
            None => Table::new(),
        };
        config::merge_tables(&mut table, raw.base);
        let base = config::config_from_table(&table, origin)?;

        let mut errs = FieldErrors::default();
        let sweep_variable: SweepVariable = raw.sweep_variable.parse()?;
        let sweep_values = match (raw.sweep_values, raw.sweep_range) {
            (Some(v), None) => v,
            (None, Some(r)) => linspace(r.start, r.stop, r.count),
            _ => {
                errs.push("sweep_values", "give exactly one of sweep_values and sweep_range");
                Vec::new()
            }
        };
        let mut methods = Vec::new();
        for m in &raw.methods {
            match m.parse::<Method>() {
                Ok(m) if !methods.contains(&m) => methods.push(m),
                Ok(_) => {}
                Err(e) => errs.push("methods", e.to_string()),
            }
        }
        if raw.methods.is_empty() {
            errs.push("methods", "must name at least one of lp, cpt, st");
        }
        methods.sort_by_key(|m| Method::ALL.iter().position(|x| x == m));

        let mut optimizer = OptimizerOptions::default();
        if let Some(g) = raw.grid_points {
            optimizer.grid_points = g;
        }
        if let Some(mode) = &raw.search_mode {
            match mode.parse::<SearchMode>() {
                Ok(m) => optimizer.search_mode = m,
                Err(e) => errs.push("search_mode", e.to_string()),
            }
        }
        let simulate = raw.simulate.map(|s| SimulateSpec {
            slots: s.slots,
            seeds: if s.seeds.is_empty() { vec![0] } else { s.seeds },
            warmup: s.warmup.unwrap_or(crate::sim::DEFAULT_WARMUP),
        });
        if simulate.as_ref().is_some_and(|s| s.slots == 0) {
            errs.push("simulate.slots", "must be at least 1");
        }
        errs.into_result()?;

        let spec = ExperimentSpec {
            base,
            sweep_variable,
            sweep_values,
            methods,
            simulate,
            output_path: dir.join(raw.output),
            optimizer,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            let mut errs = FieldErrors::default();
            errs.push("sweep_values", "must not be empty");
            return Err(Error::InvalidConfig(errs));
        }
        if self.methods.is_empty() {
            let mut errs = FieldErrors::default();
            errs.push("methods", "must not be empty");
            return Err(Error::InvalidConfig(errs));
        }
        for &v in &self.sweep_values {
            match self.sweep_variable.apply(&self.base, v) {
                Err(Error::InvalidConfig(mut errs)) if !errs.fields().any(|f| f == "sweep_values") => {
                    errs.push("sweep_values", format!("{} = {v} gives an invalid config", self.sweep_variable));
                    return Err(Error::InvalidConfig(errs));
                }
                other => {
                    other?;
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the normalized base config and the sweep definition.
    pub fn config_hash(&self) -> String {
        let mut text = config::to_toml_string(&self.base);
        let _ = write!(
            text,
            "sweep_variable={}\nsweep_values={:?}\nmethods={:?}\ngrid_points={}\nsearch_mode={:?}\nsimulate={:?}\n",
            self.sweep_variable,
            self.sweep_values,
            self.methods,
            self.optimizer.grid_points,
            self.optimizer.search_mode,
            self.simulate,
        );
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimColumns {
    pub mu_s: f64,
    /// `None` when the PU never had a packet to send.
    pub mu_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: Method,
    pub mu_s: f64,
    pub mu_p: f64,
    pub mu_p_bar: Option<f64>,
    pub feasible: bool,
    pub sim: Option<SimColumns>,
    #[serde(skip)]
    pub result: Option<OptimizationResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub config_hash: String,
    pub grid_points: usize,
    pub simulated: bool,
    pub rows: Vec<SweepRow>,
}

/// Formats `v` rounded to 9 significant digits, in plain decimal notation
/// unless it is below `1e-6` in magnitude.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("float round trip");
    if rounded.abs() < 1e-6 {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

fn pooled_sim(config: &SystemConfig, policy: &AccessPolicy, sim: &SimulateSpec) -> Result<SimColumns> {
    let runs = sim
        .seeds
        .iter()
        .map(|&seed| {
            simulate_with(
                config,
                policy,
                &SimOptions {
                    n_slots: sim.slots,
                    seed,
                    warmup: sim.warmup,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let su: u64 = runs.iter().map(|s| s.su_packets_delivered).sum();
    let slots: u64 = runs.iter().map(|s| s.slots).sum();
    let out: u64 = runs
        .iter()
        .map(|s| s.pu_direct_deliveries + s.pu_relay_handoffs)
        .sum();
    let busy: u64 = runs.iter().map(|s| s.pu_busy_slots).sum();
    Ok(SimColumns {
        mu_s: su as f64 / slots as f64,
        mu_p: (busy > 0).then(|| out as f64 / busy as f64),
    })
}

fn sweep_point(spec: &ExperimentSpec, value: f64, method: Method) -> Result<SweepRow> {
    let cfg = spec.sweep_variable.apply(&spec.base, value)?;
    let result = optimize(&cfg, method, &spec.optimizer)?;
    let feasible = !result.pu_infeasible();
    let sim = match (&spec.simulate, feasible) {
        (Some(s), true) => Some(pooled_sim(&cfg, &result.policy, s)?),
        _ => None,
    };
    Ok(SweepRow {
        value,
        method,
        mu_s: result.mu_s(),
        mu_p: result.evaluation.mu_p,
        mu_p_bar: result.evaluation.min_rate.rate(),
        feasible,
        sim,
        result: Some(result),
    })
}

/// Runs every (value, method) pair, in parallel, and returns rows ordered by
/// ascending value then method.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepTable> {
    spec.validate()?;
    let mut values = spec.sweep_values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let jobs: Vec<(f64, Method)> = values
        .iter()
        .flat_map(|&v| spec.methods.iter().map(move |&m| (v, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(v, m)| sweep_point(spec, v, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        variable: spec.sweep_variable,
        config_hash: spec.config_hash(),
        grid_points: spec.optimizer.grid_points,
        simulated: spec.simulate.is_some(),
        rows,
    })
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# cogrelay {VERSION} config_sha256={} grid_points={}\n",
            self.config_hash, self.grid_points
        );
        out.push_str(&format!("{},method,mu_s,mu_p,mu_p_bar,feasible", self.variable));
        if self.simulated {
            out.push_str(",sim_mu_s,sim_mu_p,gap_mu_s,gap_mu_p");
        }
        out.push('\n');
        for r in &self.rows {
            let bar = r.mu_p_bar.map_or_else(|| "none".to_string(), format_sig9);
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                format_sig9(r.value),
                r.method,
                format_sig9(r.mu_s),
                format_sig9(r.mu_p),
                bar,
                r.feasible
            );
            if self.simulated {
                match r.sim {
                    Some(s) => {
                        let (mu_p, gap) = match s.mu_p {
                            Some(m) => (format_sig9(m), format_sig9(m - r.mu_p)),
                            None => ("none".into(), "none".into()),
                        };
                        let _ = write!(
                            out,
                            ",{},{},{},{}",
                            format_sig9(s.mu_s),
                            mu_p,
                            format_sig9(s.mu_s - r.mu_s),
                            gap
                        );
                    }
                    None => out.push_str(",none,none,none,none"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(path, self.to_csv()).map_err(io)
    }
}

/// `|μ̄_P(2 N_P) - μ̄_P(N_P)|`, the error of standing in for an unbounded
/// PU queue with capacity `n_p`. Infinite if only one side is attainable.
pub fn capacity_doubling_shift(lambda_p: f64, n_p: usize, epsilon: f64) -> Result<f64> {
    let a = min_departure_rate(lambda_p, n_p, epsilon)?;
    let b = min_departure_rate(lambda_p, 2 * n_p, epsilon)?;
    Ok(match (a, b) {
        (MinRate::Rate(x), MinRate::Rate(y)) => (x - y).abs(),
        (MinRate::Unattainable, MinRate::Unattainable) => 0.0,
        _ => f64::INFINITY,
    })
}

/// What a single run evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Policy(AccessPolicy),
    Method(Method, OptimizerOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleReport {
    pub method: Option<Method>,
    pub policy: AccessPolicy,
    /// Chosen threshold when the policy came from the step heuristic.
    pub threshold: Option<usize>,
    pub evaluation: PolicyEvaluation,
    /// SU throughput after the PU constraint: zero when infeasible.
    pub mu_s: f64,
    pub comparison: Option<ComparisonReport>,
}

/// Evaluates a fixed policy or runs an optimizer, then optionally checks
/// the result against simulation.
pub fn run_single(config: &SystemConfig, target: &Target, sim: Option<(u64, &[u64])>) -> Result<SingleReport> {
    let (method, policy, evaluation, mu_s) = match target {
        Target::Policy(p) => {
            let ev = evaluate_policy(config, p)?;
            (None, p.clone(), ev.clone(), ev.mu_s)
        }
        Target::Method(m, opts) => {
            let r = optimize(config, *m, opts)?;
            let mu_s = r.mu_s();
            (Some(*m), r.policy, r.evaluation, mu_s)
        }
    };
    let threshold = (method == Some(Method::St))
        .then(|| policy.probs().iter().skip(1).take_while(|&&p| p == 1.0).count());
    let comparison = match sim {
        Some((slots, seeds)) => Some(compare(config, &policy, slots, seeds)?),
        None => None,
    };
    Ok(SingleReport {
        method,
        policy,
        threshold,
        evaluation,
        mu_s,
        comparison,
    })
}

impl fmt::Display for SingleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ev = &self.evaluation;
        if let Some(m) = self.method {
            writeln!(f, "method      {m}")?;
        }
        if let Some(th) = self.threshold {
            writeln!(f, "threshold   {th}")?;
        }
        let probs: Vec<String> = self.policy.probs().iter().map(|&p| format_sig9(p)).collect();
        writeln!(f, "policy      [{}]", probs.join(", "))?;
        writeln!(f, "mu_p        {}", format_sig9(ev.mu_p))?;
        match ev.min_rate.rate() {
            Some(r) => writeln!(f, "mu_p_bar    {}", format_sig9(r))?,
            None => writeln!(f, "mu_p_bar    none")?,
        }
        writeln!(f, "feasible    {}", ev.feasible)?;
        writeln!(f, "mu_s        {}", format_sig9(self.mu_s))?;
        writeln!(f, "pu_full     {}", format_sig9(ev.pu_state.full))?;
        let pi: Vec<String> = ev.relay_state.occupancy.iter().map(|&p| format_sig9(p)).collect();
        writeln!(f, "relay_pi    [{}]", pi.join(", "))?;
        if let Some(c) = &self.comparison {
            writeln!(f, "seed,sim_mu_s,gap_mu_s,sim_mu_p,gap_mu_p,relay_tv,pu_full_gap,within_3sigma")?;
            for r in &c.runs {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{},{}",
                    r.seed,
                    format_sig9(r.stats.measured_mu_s()),
                    format_sig9(r.mu_s.gap),
                    format_sig9(r.stats.measured_mu_p()),
                    format_sig9(r.mu_p.gap),
                    format_sig9(r.relay_tv.gap),
                    format_sig9(r.pu_full.gap),
                    r.within_bounds()
                )?;
            }
        }
        Ok(())
    }
}
