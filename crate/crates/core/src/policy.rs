//! SU access-policy optimization.
//!
//! The exact method fixes the PU departure rate μ_P, which turns the
//! throughput problem into a linear program over the relay occupancy `π`
//! and `a_n = π_n p_n`, and sweeps μ_P. Two one-dimensional heuristics
//! (constant probability, step threshold) search over policies directly.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{LinkBudget, SystemConfig};
use crate::lp::{self, LpProblem, LpSolution};
use crate::queue::{
    relay_arrival_prob, relay_departure_probs, relay_steady_state_unchecked,
    pu_summary_unchecked, su_throughput, AccessPolicy, MinRate, OperatingPoint,
    PolicyEvaluation, Scorer,
};

/// Below this width the achievable μ_P band is a single point for every
/// practical purpose and the departure-rate row of the LP is dropped.
pub const NARROW_BAND: f64 = 1e-7;
const GOLDEN_TOL: f64 = 1e-10;
const GOLDEN_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Linear program swept over μ_P.
    Lp,
    /// Constant probability transmission.
    Cpt,
    /// Step transmission.
    St,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Lp, Method::Cpt, Method::St];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lp => "lp",
            Method::Cpt => "cpt",
            Method::St => "st",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(Method::Lp),
            "cpt" => Ok(Method::Cpt),
            "st" => Ok(Method::St),
            other => Err(Error::Domain(format!("unknown method {other:?} (expected lp, cpt or st)"))),
        }
    }
}

/// How the heuristics score a candidate policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Each candidate is scored at its own self-consistent operating point.
    #[default]
    FixedPoint,
    /// μ_P is swept like the LP; at each μ_P only candidates whose relay
    /// reproduces that μ_P (CPT) or at least that μ_P (ST) count.
    MuSweep,
}

impl FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-point" | "fixed_point" => Ok(SearchMode::FixedPoint),
            "mu-sweep" | "mu_sweep" => Ok(SearchMode::MuSweep),
            other => Err(Error::Domain(format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Interior μ_P grid points; both band endpoints are always added.
    pub grid_points: usize,
    /// Golden-section refinement of the LP objective around the best grid point.
    pub refine: bool,
    /// Spacing of the CPT safety scan.
    pub cpt_grid_step: f64,
    pub search_mode: SearchMode,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            grid_points: 200,
            refine: true,
            cpt_grid_step: 1e-3,
            search_mode: SearchMode::FixedPoint,
        }
    }
}

/// A closed interval of PU departure rates; empty when `lower > upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuRange {
    pub lower: f64,
    pub upper: f64,
}

impl MuRange {
    pub fn is_empty(&self) -> bool {
        !(self.lower <= self.upper)
    }

    pub fn width(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.upper - self.lower
        }
    }
}

/// One probe of a one-dimensional search: μ_P for the LP, `p` for CPT,
/// the threshold for ST.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchPoint {
    pub x: f64,
    /// `-inf` when the probe is infeasible.
    pub objective: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// No access policy meets the PU loss constraint.
    PuInfeasible,
    /// The μ_P band collapsed to a point and the LP ran without the
    /// departure-rate row.
    NarrowBand,
    /// The CPT throughput curve has more than one local maximum.
    CptNotUnimodal,
    /// The CPT grid scan beat the interval search.
    CptGridWins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub method: Method,
    pub policy: AccessPolicy,
    /// Self-consistent evaluation of `policy`.
    pub evaluation: PolicyEvaluation,
    /// μ_P at which the winning point was found (LP and μ_P-sweep modes).
    pub swept_mu_p: Option<f64>,
    /// LP objective at the winning point.
    pub lp_objective: Option<f64>,
    pub diagnostics: Vec<SearchPoint>,
    pub flags: Vec<Flag>,
}

impl OptimizationResult {
    pub fn pu_infeasible(&self) -> bool {
        self.flags.contains(&Flag::PuInfeasible)
    }

    /// SU throughput, zero when the PU constraint cannot be met.
    pub fn mu_s(&self) -> f64 {
        if self.pu_infeasible() {
            0.0
        } else {
            self.evaluation.mu_s
        }
    }
}

fn departure_interval(min_rate: MinRate, budget: &LinkBudget) -> MuRange {
    let upper = budget.max_pu_departure();
    let floor = budget.theta_pd + budget.relay_capture() * budget.theta_sd_shared;
    let lower = match min_rate {
        MinRate::Rate(r) => r.max(floor),
        MinRate::Unattainable => f64::INFINITY,
    };
    MuRange { lower, upper }
}

/// PU departure rates reachable by some policy without violating the loss
/// constraint: `max(μ̄_P, θ_PD + θ_PS θ̄_SD (1-θ_PD)) ≤ μ_P ≤ θ_PD + θ_PS (1-θ_PD)`.
pub fn feasible_mu_p_range(config: &SystemConfig, budget: &LinkBudget) -> Result<MuRange> {
    let min_rate = crate::queue::min_departure_rate(
        config.pu_arrival_rate,
        config.pu_queue_capacity,
        config.loss_threshold,
    )?;
    Ok(departure_interval(min_rate, budget))
}

/// Variables are `π_0..=π_N` followed by `a_0..=a_N`.
fn lp_for(budget: &LinkBudget, n_s: usize, q: f64, mu_p: Option<f64>) -> LpProblem {
    let n = n_s + 1;
    let pi = |k: usize| k;
    let a = |k: usize| n + k;
    let sd = budget.theta_sd;
    let gap = budget.sd_sharing_penalty();

    let mut objective = vec![0.0; 2 * n];
    objective[a(0)] = budget.theta_sr;
    for k in 1..n {
        objective[a(k)] = budget.theta_sr_shared;
    }
    let mut lp = LpProblem::new(objective);
    for j in 0..2 * n {
        lp.set_bounds(j, 0.0, 1.0);
    }
    let row = |entries: &[(usize, f64)]| {
        let mut r = vec![0.0; 2 * n];
        for &(j, v) in entries {
            r[j] += v;
        }
        r
    };

    lp.add_eq(row(&(0..n).map(|k| (pi(k), 1.0)).collect::<Vec<_>>()), 1.0);
    lp.add_eq(
        row(&[(pi(1), sd * (1.0 - q)), (pi(0), -q), (a(1), -gap * (1.0 - q))]),
        0.0,
    );
    for k in 1..n_s {
        lp.add_eq(
            row(&[
                (pi(k + 1), sd * (1.0 - q)),
                (pi(k), -q * (1.0 - sd)),
                (a(k + 1), -gap * (1.0 - q)),
                (a(k), -q * gap),
            ]),
            0.0,
        );
    }
    if let Some(mu_p) = mu_p {
        let capture = budget.relay_capture();
        if capture > 0.0 {
            lp.add_eq(
                row(&[(pi(n_s), 1.0 - sd), (a(n_s), gap)]),
                1.0 - (mu_p - budget.theta_pd) / capture,
            );
        }
    }
    lp.add_eq(row(&[(a(0), 1.0), (pi(0), -1.0)]), 0.0);
    for k in 1..n {
        lp.add_le(row(&[(a(k), 1.0), (pi(k), -1.0)]), 0.0);
    }
    lp.add_le(row(&(0..n).map(|k| (a(k), 1.0)).collect::<Vec<_>>()), 1.0);
    lp
}

fn arrival_at(config: &SystemConfig, budget: &LinkBudget, mu_p: f64) -> f64 {
    let busy = pu_summary_unchecked(config.pu_arrival_rate, mu_p, config.pu_queue_capacity).busy;
    relay_arrival_prob(busy, budget)
}

/// The linear program for a fixed PU departure rate `mu_p`: normalization,
/// the linearized balance equations, the departure-rate row, `a_0 = π_0`,
/// `a_n ≤ π_n`, `Σ a ≤ 1` and unit boxes.
pub fn build_lp(config: &SystemConfig, budget: &LinkBudget, mu_p: f64) -> Result<LpProblem> {
    config.validate()?;
    if !(0.0..=1.0).contains(&mu_p) {
        return Err(Error::Domain(format!("mu_p must lie in [0, 1], got {mu_p}")));
    }
    let q = arrival_at(config, budget, mu_p);
    Ok(lp_for(budget, config.relay_queue_capacity, q, Some(mu_p)))
}

/// `p_n = a_n / π_n`, with unreachable states (`π_n ≈ 0`) set to 0.
pub fn recover_policy(solution: &LpSolution, n_s: usize) -> Result<AccessPolicy> {
    let n = n_s + 1;
    if solution.values.len() != 2 * n {
        return Err(Error::Domain(format!(
            "expected {} LP values, got {}",
            2 * n,
            solution.values.len()
        )));
    }
    let tail: Vec<f64> = (1..n)
        .map(|k| {
            let pi = solution.values[k];
            if pi <= 1e-12 {
                0.0
            } else {
                (solution.values[n + k] / pi).clamp(0.0, 1.0)
            }
        })
        .collect();
    AccessPolicy::from_tail(&tail)
}

/// Maximizes `f` on `[a, b]` by golden-section search. Returns the best
/// point probed, which includes both ends; ties go to the lower end unless
/// `prefer_high`.
fn golden_max(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, prefer_high: bool) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let better = |x: f64, fx: f64, best: (f64, f64)| {
        fx > best.1 || (fx == best.1 && (x > best.0) == prefer_high)
    };
    let mut best = (a, f(a));
    let fb = f(b);
    if better(b, fb, best) {
        best = (b, fb);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_MAX_ITERS {
        if hi - lo <= GOLDEN_TOL {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, fx) in [(x1, f1), (x2, f2)] {
        if better(x, fx, best) {
            best = (x, fx);
        }
    }
    best
}

/// Index of the first maximum (the last with `prefer_high`); `None` if every
/// entry is `-inf`.
fn argmax(values: &[f64], prefer_high: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        if best.is_none_or(|b| v > values[b] || (prefer_high && v == values[b])) {
            best = Some(i);
        }
    }
    best
}

/// Number of interior local maxima of a sampled curve, with `-inf` samples
/// treated as part of the curve and differences below `tol` as flat.
pub fn count_local_maxima(values: &[f64], tol: f64) -> usize {
    let mut count = 0;
    let mut rising = true;
    let mut seen_rise = false;
    for w in values.windows(2) {
        let (a, b) = (w[0], w[1]);
        let diff = if a == b { 0.0 } else { b - a };
        if diff > tol {
            if !rising {
                rising = true;
            }
            seen_rise = true;
        } else if diff < -tol && rising {
            rising = false;
            if seen_rise || count == 0 {
                count += 1;
            }
        }
    }
    if rising {
        count += 1;
    }
    count
}

struct Context<'a> {
    config: &'a SystemConfig,
    scorer: Scorer,
    opts: OptimizerOptions,
}

impl<'a> Context<'a> {
    fn new(config: &'a SystemConfig, opts: &OptimizerOptions) -> Result<Self> {
        Ok(Context {
            config,
            scorer: Scorer::new(config)?,
            opts: *opts,
        })
    }

    fn n_s(&self) -> usize {
        self.config.relay_queue_capacity
    }

    fn finish(
        &self,
        method: Method,
        policy: AccessPolicy,
        point: OperatingPoint,
        swept_mu_p: Option<f64>,
        lp_objective: Option<f64>,
        diagnostics: Vec<SearchPoint>,
        mut flags: Vec<Flag>,
    ) -> Result<OptimizationResult> {
        let evaluation = self.scorer.evaluation(point)?;
        if !evaluation.feasible && !flags.contains(&Flag::PuInfeasible) {
            flags.push(Flag::PuInfeasible);
        }
        Ok(OptimizationResult {
            method,
            policy,
            evaluation,
            swept_mu_p,
            lp_objective,
            diagnostics,
            flags,
        })
    }

    /// The most PU-friendly policy, reported when nothing is feasible.
    fn infeasible(&self, method: Method, diagnostics: Vec<SearchPoint>) -> Result<OptimizationResult> {
        let policy = AccessPolicy::zeros(self.n_s());
        let point = self.scorer.operating_point(&policy, None)?;
        self.finish(method, policy, point, None, None, diagnostics, vec![Flag::PuInfeasible])
    }

    /// Feasible μ_P values some policy actually reaches: the LP range
    /// clipped to the operating points of the all-ones and all-zeros
    /// policies, which bound every policy's departure rate.
    fn achievable_band(&self) -> Result<Option<MuRange>> {
        let range = departure_interval(self.scorer.min_rate, &self.scorer.budget);
        if range.is_empty() {
            return Ok(None);
        }
        let n_s = self.n_s();
        let slowest = self.scorer.operating_point(&AccessPolicy::ones(n_s), None)?;
        let fastest = self.scorer.operating_point(&AccessPolicy::zeros(n_s), None)?;
        if !self.scorer.feasible(fastest.mu_p) {
            return Ok(None);
        }
        let upper = range.upper.min(fastest.mu_p);
        let lower = range.lower.max(slowest.mu_p).min(upper);
        Ok(Some(MuRange { lower, upper }))
    }

    fn grid(&self, band: MuRange) -> Vec<f64> {
        let steps = self.opts.grid_points + 1;
        (0..=steps)
            .map(|k| {
                if k == steps {
                    band.upper
                } else {
                    band.lower + band.width() * k as f64 / steps as f64
                }
            })
            .collect()
    }

    fn solve_lp_at(&self, mu_p: f64) -> Result<LpSolution> {
        let q = arrival_at(self.config, &self.scorer.budget, mu_p);
        lp::solve(&lp_for(&self.scorer.budget, self.n_s(), q, Some(mu_p)))
    }

    fn optimal(&self) -> Result<OptimizationResult> {
        let Some(band) = self.achievable_band()? else {
            return self.infeasible(Method::Lp, Vec::new());
        };

        let mut flags = Vec::new();
        let (mu_best, solution, diagnostics) = if band.width() < NARROW_BAND {
            flags.push(Flag::NarrowBand);
            let mu = 0.5 * (band.lower + band.upper);
            let q = arrival_at(self.config, &self.scorer.budget, mu);
            let sol = lp::solve(&lp_for(&self.scorer.budget, self.n_s(), q, None))?;
            let diag = vec![SearchPoint {
                x: mu,
                objective: sol.objective_value,
                feasible: sol.is_optimal(),
            }];
            (mu, sol, diag)
        } else {
            let grid = self.grid(band);
            let solutions: Vec<LpSolution> = grid
                .par_iter()
                .map(|&mu| self.solve_lp_at(mu))
                .collect::<Result<_>>()?;
            let objectives: Vec<f64> = solutions
                .iter()
                .map(|s| if s.is_optimal() { s.objective_value } else { f64::NEG_INFINITY })
                .collect();
            let diag = grid
                .iter()
                .zip(&objectives)
                .map(|(&x, &objective)| SearchPoint {
                    x,
                    objective,
                    feasible: objective > f64::NEG_INFINITY,
                })
                .collect();
            let Some(i) = argmax(&objectives, false) else {
                return self.infeasible(Method::Lp, diag);
            };
            let mut best = (grid[i], solutions[i].clone());
            if self.opts.refine {
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(grid.len() - 1)];
                let (x, fx) = golden_max(
                    |mu| match self.solve_lp_at(mu) {
                        Ok(s) if s.is_optimal() => s.objective_value,
                        _ => f64::NEG_INFINITY,
                    },
                    lo,
                    hi,
                    false,
                );
                if fx > objectives[i] {
                    let s = self.solve_lp_at(x)?;
                    if s.is_optimal() {
                        best = (x, s);
                    }
                }
            }
            (best.0, best.1, diag)
        };

        if !solution.is_optimal() {
            return self.infeasible(Method::Lp, diagnostics);
        }
        let policy = recover_policy(&solution, self.n_s())?;
        let point = self.scorer.operating_point(&policy, Some(mu_best))?;
        self.finish(
            Method::Lp,
            policy,
            point,
            Some(mu_best),
            Some(solution.objective_value),
            diagnostics,
            flags,
        )
    }

    /// Feasible throughput of a policy at its own operating point.
    fn score(&self, policy: &AccessPolicy) -> Result<(f64, OperatingPoint)> {
        let point = self.scorer.operating_point(policy, None)?;
        let value = if self.scorer.feasible(point.mu_p) {
            point.mu_s
        } else {
            f64::NEG_INFINITY
        };
        Ok((value, point))
    }

    fn score_constant(&self, p: f64) -> f64 {
        AccessPolicy::constant(self.n_s(), p.clamp(0.0, 1.0))
            .and_then(|pol| self.score(&pol))
            .map_or(f64::NEG_INFINITY, |(v, _)| v)
    }

    fn cpt(&self) -> Result<OptimizationResult> {
        if self.opts.search_mode == SearchMode::MuSweep {
            if let Some(result) = self.cpt_mu_sweep()? {
                return Ok(result);
            }
        }
        let step = self.opts.cpt_grid_step.clamp(1e-6, 1.0);
        let count = (1.0 / step).round() as usize;
        let ps: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(1.0)).collect();
        let values: Vec<f64> = ps.par_iter().map(|&p| self.score_constant(p)).collect();
        let diagnostics: Vec<SearchPoint> = ps
            .iter()
            .zip(&values)
            .map(|(&x, &objective)| SearchPoint {
                x,
                objective,
                feasible: objective > f64::NEG_INFINITY,
            })
            .collect();

        let mut flags = Vec::new();
        if count_local_maxima(&values, 1e-12) > 1 {
            flags.push(Flag::CptNotUnimodal);
        }
        // Ties go to the larger probability: more SU access for the same throughput.
        let searched = golden_max(|p| self.score_constant(p), 0.0, 1.0, true);
        let Some(i) = argmax(&values, true) else {
            return self.infeasible(Method::Cpt, diagnostics);
        };
        let local = golden_max(
            |p| self.score_constant(p),
            ps[i.saturating_sub(1)],
            ps[(i + 1).min(ps.len() - 1)],
            true,
        );
        let mut best = searched;
        if values[i] > best.1 + 1e-12 {
            flags.push(Flag::CptGridWins);
            best = (ps[i], values[i]);
        } else if values[i] == best.1 && ps[i] > best.0 {
            best = (ps[i], values[i]);
        }
        if local.1 > best.1 || (local.1 == best.1 && local.0 > best.0) {
            best = local;
        }
        if best.1 == f64::NEG_INFINITY {
            return self.infeasible(Method::Cpt, diagnostics);
        }
        let policy = AccessPolicy::constant(self.n_s(), best.0)?;
        let (_, point) = self.score(&policy)?;
        self.finish(Method::Cpt, policy, point, None, None, diagnostics, flags)
    }

    fn st(&self) -> Result<OptimizationResult> {
        if self.opts.search_mode == SearchMode::MuSweep {
            if let Some(result) = self.st_mu_sweep()? {
                return Ok(result);
            }
        }
        let n_s = self.n_s();
        let scored: Vec<(f64, OperatingPoint)> = (0..=n_s)
            .into_par_iter()
            .map(|th| self.score(&AccessPolicy::step(n_s, th)))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = scored.iter().map(|s| s.0).collect();
        let diagnostics = values
            .iter()
            .enumerate()
            .map(|(th, &objective)| SearchPoint {
                x: th as f64,
                objective,
                feasible: objective > f64::NEG_INFINITY,
            })
            .collect();
        let Some(th) = argmax(&values, false) else {
            return self.infeasible(Method::St, diagnostics);
        };
        let point = scored.into_iter().nth(th).map(|s| s.1).expect("threshold in range");
        self.finish(
            Method::St,
            AccessPolicy::step(n_s, th),
            point,
            None,
            None,
            diagnostics,
            Vec::new(),
        )
    }

    /// Relay state and implied μ_P of `policy` when μ_P is assumed, not solved for.
    fn pinned(&self, mu_p: f64, policy: &AccessPolicy) -> (f64, f64) {
        let budget = &self.scorer.budget;
        let q = arrival_at(self.config, budget, mu_p);
        let relay = relay_steady_state_unchecked(q, &relay_departure_probs(policy, budget));
        (self.scorer.implied_mu_p(&relay), su_throughput(&relay, policy, budget))
    }

    fn sweep_band(&self) -> Result<Option<Vec<f64>>> {
        Ok(self
            .achievable_band()?
            .filter(|b| b.width() >= NARROW_BAND)
            .map(|b| self.grid(b)))
    }

    fn sweep_result(
        &self,
        method: Method,
        winner: Option<(f64, AccessPolicy)>,
        diagnostics: Vec<SearchPoint>,
    ) -> Result<Option<OptimizationResult>> {
        let Some((mu, policy)) = winner else {
            return Ok(None);
        };
        let point = self.scorer.operating_point(&policy, Some(mu))?;
        self.finish(method, policy, point, Some(mu), None, diagnostics, Vec::new())
            .map(Some)
    }

    fn cpt_mu_sweep(&self) -> Result<Option<OptimizationResult>> {
        let Some(grid) = self.sweep_band()? else {
            return Ok(None);
        };
        let n_s = self.n_s();
        let rows: Vec<(f64, Option<f64>)> = grid
            .par_iter()
            .map(|&mu| {
                let implied = |p: f64| {
                    self.pinned(mu, &AccessPolicy::constant(n_s, p).expect("p in [0, 1]")).0
                };
                // implied(p) decreases in p; find implied(p) = mu.
                if implied(0.0) < mu || implied(1.0) > mu {
                    return (mu, None);
                }
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if implied(mid) >= mu {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                (mu, Some(lo))
            })
            .collect();
        let mut best: Option<(f64, f64, f64)> = None;
        let diagnostics = rows
            .iter()
            .map(|&(mu, p)| {
                let objective = p.map_or(f64::NEG_INFINITY, |p| {
                    self.pinned(mu, &AccessPolicy::constant(n_s, p).expect("p in [0, 1]")).1
                });
                if let Some(p) = p {
                    if best.is_none_or(|b| objective > b.2) {
                        best = Some((mu, p, objective));
                    }
                }
                SearchPoint {
                    x: mu,
                    objective,
                    feasible: p.is_some(),
                }
            })
            .collect();
        let winner = match best {
            Some((mu, p, _)) => Some((mu, AccessPolicy::constant(n_s, p)?)),
            None => None,
        };
        self.sweep_result(Method::Cpt, winner, diagnostics)
    }

    fn st_mu_sweep(&self) -> Result<Option<OptimizationResult>> {
        let Some(grid) = self.sweep_band()? else {
            return Ok(None);
        };
        let n_s = self.n_s();
        let rows: Vec<(f64, Option<(usize, f64)>)> = grid
            .par_iter()
            .map(|&mu| {
                let mut best: Option<(usize, f64)> = None;
                for th in 0..=n_s {
                    let (implied, mu_s) = self.pinned(mu, &AccessPolicy::step(n_s, th));
                    if implied >= mu - 1e-12 && best.is_none_or(|b| mu_s > b.1) {
                        best = Some((th, mu_s));
                    }
                }
                (mu, best)
            })
            .collect();
        let mut best: Option<(f64, usize, f64)> = None;
        let diagnostics = rows
            .iter()
            .map(|&(mu, hit)| {
                if let Some((th, v)) = hit {
                    if best.is_none_or(|b| v > b.2) {
                        best = Some((mu, th, v));
                    }
                }
                SearchPoint {
                    x: mu,
                    objective: hit.map_or(f64::NEG_INFINITY, |h| h.1),
                    feasible: hit.is_some(),
                }
            })
            .collect();
        let winner = best.map(|(mu, th, _)| (mu, AccessPolicy::step(n_s, th)));
        self.sweep_result(Method::St, winner, diagnostics)
    }
}

/// Sweeps μ_P over the achievable band, solves the linear program at each
/// grid point, and recovers `p_n = a_n / π_n` at the best one.
pub fn optimal_policy(config: &SystemConfig, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    Context::new(config, opts)?.optimal()
}

/// Best single access probability for every non-empty relay state.
pub fn cpt_policy(config: &SystemConfig, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    Context::new(config, opts)?.cpt()
}

/// Best time-sharing threshold.
pub fn st_policy(config: &SystemConfig, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    Context::new(config, opts)?.st()
}

pub fn optimize(config: &SystemConfig, method: Method, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    match method {
        Method::Lp => optimal_policy(config, opts),
        Method::Cpt => cpt_policy(config, opts),
        Method::St => st_policy(config, opts),
    }
}
