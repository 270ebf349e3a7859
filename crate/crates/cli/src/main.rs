use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cogrelay_core::config::{load_with_overrides, to_toml_string};
use cogrelay_core::experiment::{run_single, run_sweep, ExperimentSpec, SingleReport, Target};
use cogrelay_core::{AccessPolicy, Method, OptimizerOptions, SearchMode, SystemConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cogrelay", version, about = "Cognitive relay throughput optimization and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a fixed access policy.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Find the best access policy with one method.
    Optimize {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "lp")]
        method: Method,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Simulate a policy (given, or chosen by --method) and compare with the analysis.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long, conflicts_with_all = ["policy", "constant", "step"])]
        method: Option<Method>,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, default_value_t = 1_000_000)]
        slots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Several seeds, comma separated; overrides --seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment file and write its CSV.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Write here instead of the path named in the spec.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a config file and print it normalized, with linear gains.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set pu_arrival_rate=0.3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SystemConfig> {
        Ok(load_with_overrides(self.config.as_deref(), &self.overrides)?)
    }
}

#[derive(Args)]
struct PolicyArgs {
    /// Access probabilities p_1..p_N (or p_0..p_N with p_0 = 1), comma separated.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<f64>>,
    /// Same probability in every non-empty relay state.
    #[arg(long, conflicts_with = "policy")]
    constant: Option<f64>,
    /// Time-share only while the relay holds at most this many packets.
    #[arg(long, conflicts_with_all = ["policy", "constant"])]
    step: Option<usize>,
}

impl PolicyArgs {
    fn build(&self, n_s: usize) -> Result<Option<AccessPolicy>> {
        let policy = if let Some(p) = &self.policy {
            if p.len() == n_s + 1 {
                AccessPolicy::new(p.clone())?
            } else if p.len() == n_s {
                AccessPolicy::from_tail(p)?
            } else {
                bail!("--policy needs {n_s} or {} values, got {}", n_s + 1, p.len());
            }
        } else if let Some(c) = self.constant {
            AccessPolicy::constant(n_s, c)?
        } else if let Some(th) = self.step {
            if th > n_s {
                bail!("--step threshold {th} exceeds relay capacity {n_s}");
            }
            AccessPolicy::step(n_s, th)
        } else {
            return Ok(None);
        };
        Ok(Some(policy))
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Interior points of the PU departure-rate grid.
    #[arg(long, default_value_t = 200)]
    grid_points: usize,
    /// Skip golden-section refinement around the best grid point.
    #[arg(long)]
    no_refine: bool,
    /// fixed-point or mu-sweep scoring for the cpt and st heuristics.
    #[arg(long, default_value = "fixed-point")]
    search_mode: SearchMode,
}

impl SearchArgs {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            grid_points: self.grid_points,
            refine: !self.no_refine,
            search_mode: self.search_mode,
            ..OptimizerOptions::default()
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    json: bool,
    /// Also simulate this many slots and report the gaps.
    #[arg(long)]
    simulate: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
}

fn emit(report: &SingleReport, json: bool) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string(report)?);
    } else {
        print!("{report}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evaluate { config, policy, output } => {
            let cfg = config.load()?;
            let policy = policy
                .build(cfg.relay_queue_capacity)?
                .context("give one of --policy, --constant or --step")?;
            let sim = output.simulate.map(|n| (n, output.seeds.as_slice()));
            emit(&run_single(&cfg, &Target::Policy(policy), sim)?, output.json)
        }
        Command::Optimize { config, method, search, output } => {
            let cfg = config.load()?;
            let sim = output.simulate.map(|n| (n, output.seeds.as_slice()));
            emit(&run_single(&cfg, &Target::Method(method, search.options()), sim)?, output.json)
        }
        Command::Simulate { config, policy, method, search, slots, seed, seeds, json } => {
            let cfg = config.load()?;
            let target = match (policy.build(cfg.relay_queue_capacity)?, method) {
                (Some(p), _) => Target::Policy(p),
                (None, Some(m)) => Target::Method(m, search.options()),
                (None, None) => bail!("give a policy (--policy, --constant, --step) or --method"),
            };
            let seeds = if seeds.is_empty() { vec![seed] } else { seeds };
            emit(&run_single(&cfg, &target, Some((slots, &seeds)))?, json)
        }
        Command::Sweep { spec, output } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if let Some(out) = output {
                spec.output_path = out;
            }
            let table = run_sweep(&spec)?;
            table.write_csv(&spec.output_path)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), spec.output_path.display());
            Ok(())
        }
        Command::Validate { config } => {
            print!("{}", to_toml_string(&config.load()?));
            Ok(())
        }
    }
}

fn error_line(err: &anyhow::Error) -> serde_json::Value {
    match err.downcast_ref::<cogrelay_core::Error>() {
        Some(core) => {
            let mut line = json!({ "error": core.kind(), "message": core.to_string() });
            if let cogrelay_core::Error::InvalidConfig(fields) = core {
                line["fields"] = fields
                    .0
                    .iter()
                    .map(|f| json!({ "field": f.field, "message": f.message }))
                    .collect();
            }
            line
        }
        None => json!({ "error": "usage", "message": format!("{err:#}") }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}
