//! Optimal and heuristic spectrum access for a cognitive relay with finite
//! packet buffers.
//!
//! A secondary user (SU) forwards failed packets of a primary user (PU)
//! through a finite relay queue, and in each relaying phase may time-share
//! to send its own packet. The crate computes the steady state of both
//! queues, finds access policies that maximise SU throughput while keeping
//! the PU queue's full probability under a threshold, and checks all of it
//! against a slot-level Monte Carlo simulation.

pub mod config;
pub mod error;
pub mod experiment;
pub mod link;
pub mod lp;
pub mod policy;
pub mod queue;
pub mod sim;

pub use error::{Error, FieldError, FieldErrors, Result};
pub use link::{link_budget, success_probability, Link, LinkBudget, PerLink, SystemConfig};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use policy::{
    build_lp, cpt_policy, feasible_mu_p_range, optimal_policy, optimize, st_policy, Flag, Method,
    MuRange, OptimizationResult,
    OptimizerOptions, SearchMode,
};
pub use queue::{
    evaluate_policy, evaluate_policy_from, min_departure_rate, pu_steady_state,
    relay_steady_state, AccessPolicy, MinRate, PolicyEvaluation, PuSteadyState,
    RelaySteadyState,
};
pub use sim::{compare, simulate, simulate_with, ComparisonReport, SimOptions, SimStats};
pub use config::{load_config, load_with_overrides, parse_config};
pub use experiment::{run_single, run_sweep, ExperimentSpec, SweepTable, SweepVariable, Target};
