//! Steady-state analysis of the PU queue and the relay queue, and
//! self-consistent scoring of an access policy.
//!
//! Both queues are birth-death chains. The PU queue sees Bernoulli(λ)
//! arrivals and is served with probability μ_P per busy slot, arrivals
//! landing after service. The relay queue is observed at the end of the
//! receiving phase; it gains a packet with probability `q` and forwards one
//! with probability `r_n` in state `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{link_budget, LinkBudget, SystemConfig};

/// Slack allowed when comparing a policy's departure rate with μ̄_P, so a
/// policy sitting exactly on the constraint is not rejected by round-off.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// Stationary distribution of the PU queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuSteadyState {
    /// `w_0..=w_{N_P}`.
    pub occupancy: Vec<f64>,
    /// Probability the queue is non-empty, `1 - w_0`.
    pub busy: f64,
    /// Probability the queue is full, `w_{N_P}`.
    pub full: f64,
    /// Ratio between consecutive occupancy probabilities above state 1.
    pub gamma: f64,
}

/// Busy and full probabilities of the PU queue without the occupancy vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuSummary {
    pub busy: f64,
    pub full: f64,
    pub gamma: f64,
}

/// Sum of `x^k` for `k = 0..n`, with `x = 1 + delta`, accurate near `x = 1`.
fn geometric_sum(delta: f64, n: usize) -> f64 {
    if delta == 0.0 {
        n as f64
    } else if delta == -1.0 {
        1.0
    } else {
        (n as f64 * delta.ln_1p()).exp_m1() / delta
    }
}

enum PuShape {
    /// All mass in one state.
    Point(usize),
    /// `w_n ∝ c γ^{n-1}` for `n ≥ 1`, `w_0 ∝ 1`; `delta = γ - 1`.
    Geometric { c: f64, gamma: f64, delta: f64 },
}

fn check_pu_inputs(lambda_p: f64, mu_p: f64, n_p: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda_p) {
        return Err(Error::Domain(format!("lambda_p must lie in [0, 1], got {lambda_p}")));
    }
    if !(0.0..=1.0).contains(&mu_p) {
        return Err(Error::Domain(format!("mu_p must lie in [0, 1], got {mu_p}")));
    }
    if n_p == 0 {
        return Err(Error::Domain("PU queue capacity must be at least 1".into()));
    }
    Ok(())
}

fn pu_shape(lambda_p: f64, mu_p: f64, n_p: usize) -> PuShape {
    if lambda_p == 0.0 {
        PuShape::Point(0)
    } else if mu_p == 0.0 {
        PuShape::Point(n_p)
    } else if lambda_p == 1.0 {
        // An arrival every slot: a served queue refills at once.
        PuShape::Point(if mu_p == 1.0 { 1 } else { n_p })
    } else {
        let denom = (1.0 - lambda_p) * mu_p;
        PuShape::Geometric {
            c: lambda_p / denom,
            gamma: lambda_p * (1.0 - mu_p) / denom,
            delta: (lambda_p - mu_p) / denom,
        }
    }
}

/// Busy and full probabilities in O(1), stable for very large capacities.
pub fn pu_summary(lambda_p: f64, mu_p: f64, n_p: usize) -> Result<PuSummary> {
    check_pu_inputs(lambda_p, mu_p, n_p)?;
    Ok(pu_summary_unchecked(lambda_p, mu_p, n_p))
}

pub(crate) fn pu_summary_unchecked(lambda_p: f64, mu_p: f64, n_p: usize) -> PuSummary {
    match pu_shape(lambda_p, mu_p, n_p) {
        PuShape::Point(k) => PuSummary {
            busy: if k > 0 { 1.0 } else { 0.0 },
            full: if k == n_p { 1.0 } else { 0.0 },
            gamma: if k == 0 { 0.0 } else { f64::INFINITY },
        },
        PuShape::Geometric { c, gamma, delta } => {
            if gamma <= 1.0 {
                let total = 1.0 + c * geometric_sum(delta, n_p);
                PuSummary {
                    busy: 1.0 - 1.0 / total,
                    full: c * ratio_pow(delta, n_p - 1) / total,
                    gamma,
                }
            } else {
                // Scale by the top state so nothing overflows.
                let empty_scaled = ratio_pow(-delta / gamma, n_p - 1) / c;
                let full = 1.0 / (empty_scaled + geometric_sum(-delta / gamma, n_p));
                PuSummary {
                    busy: 1.0 - empty_scaled * full,
                    full,
                    gamma,
                }
            }
        }
    }
}

/// `(1 + delta)^k`.
fn ratio_pow(delta: f64, k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        (k as f64 * delta.ln_1p()).exp()
    }
}

/// Full stationary distribution of the PU queue.
pub fn pu_steady_state(lambda_p: f64, mu_p: f64, n_p: usize) -> Result<PuSteadyState> {
    check_pu_inputs(lambda_p, mu_p, n_p)?;
    let summary = pu_summary_unchecked(lambda_p, mu_p, n_p);
    let mut occupancy = vec![0.0; n_p + 1];
    match pu_shape(lambda_p, mu_p, n_p) {
        PuShape::Point(k) => occupancy[k] = 1.0,
        PuShape::Geometric { c, gamma, delta } => {
            let empty = 1.0 - summary.busy;
            occupancy[0] = empty;
            for (n, w) in occupancy.iter_mut().enumerate().skip(1) {
                *w = if gamma <= 1.0 {
                    empty * c * ratio_pow(delta, n - 1)
                } else {
                    summary.full * ratio_pow(-delta / gamma, n_p - n)
                };
            }
            occupancy[n_p] = summary.full;
        }
    }
    Ok(PuSteadyState {
        occupancy,
        busy: summary.busy,
        full: summary.full,
        gamma: summary.gamma,
    })
}

/// Smallest PU departure rate keeping the full-queue probability within ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinRate {
    Rate(f64),
    /// Even a PU served every slot overflows too often.
    Unattainable,
}

impl MinRate {
    pub fn rate(self) -> Option<f64> {
        match self {
            MinRate::Rate(r) => Some(r),
            MinRate::Unattainable => None,
        }
    }

    pub fn admits(self, mu_p: f64) -> bool {
        match self {
            MinRate::Rate(r) => mu_p >= r - FEASIBILITY_SLACK,
            MinRate::Unattainable => false,
        }
    }
}

const BISECTION_FLOOR: f64 = 1e-9;
const BISECTION_MAX_ITERS: usize = 200;

/// Bisection for μ̄_P on `[1e-9, 1]`; the full probability is strictly
/// decreasing in μ_P, so the bracket always holds the root.
pub fn min_departure_rate(lambda_p: f64, n_p: usize, epsilon: f64) -> Result<MinRate> {
    check_pu_inputs(lambda_p, 1.0, n_p)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if lambda_p == 0.0 {
        return Ok(MinRate::Rate(0.0));
    }
    let full = |mu: f64| pu_summary_unchecked(lambda_p, mu, n_p).full;
    if full(1.0) > epsilon {
        return Ok(MinRate::Unattainable);
    }
    let (mut lo, mut hi) = (BISECTION_FLOOR, 1.0);
    if full(lo) <= epsilon {
        return Ok(MinRate::Rate(0.0));
    }
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if full(mid) > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MinRate::Rate(hi))
}

/// Probabilities `p_0..=p_{N_S}` that the SU time-shares in each relay state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPolicy {
    probs: Vec<f64>,
}

impl AccessPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPolicy(
                "a policy needs p_0 and at least one relay state".into(),
            ));
        }
        if probs[0] != 1.0 {
            return Err(Error::InvalidPolicy(format!("p_0 must be 1, got {}", probs[0])));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidPolicy(format!("p_{n} = {p} is not a probability")));
        }
        Ok(AccessPolicy { probs })
    }

    /// Builds a policy from `p_1..=p_{N_S}`.
    pub fn from_tail(tail: &[f64]) -> Result<Self> {
        let mut probs = Vec::with_capacity(tail.len() + 1);
        probs.push(1.0);
        probs.extend_from_slice(tail);
        Self::new(probs)
    }

    /// Same probability in every non-empty state.
    pub fn constant(n_s: usize, p: f64) -> Result<Self> {
        Self::from_tail(&vec![p; n_s])
    }

    /// Time-share up to `threshold` packets, relay only above it.
    pub fn step(n_s: usize, threshold: usize) -> Self {
        let probs = (0..=n_s)
            .map(|n| if n <= threshold { 1.0 } else { 0.0 })
            .collect();
        AccessPolicy { probs }
    }

    pub fn zeros(n_s: usize) -> Self {
        Self::step(n_s, 0)
    }

    pub fn ones(n_s: usize) -> Self {
        Self::step(n_s, n_s)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn relay_capacity(&self) -> usize {
        self.probs.len() - 1
    }
}

/// Forwarding success `r_n = θ_SD - p_n (θ_SD - θ̄_SD)` for `n = 1..=N_S`.
pub fn relay_departure_probs(policy: &AccessPolicy, budget: &LinkBudget) -> Vec<f64> {
    let penalty = budget.sd_sharing_penalty();
    policy.probs[1..]
        .iter()
        .map(|p| (budget.theta_sd - p * penalty).clamp(0.0, 1.0))
        .collect()
}

/// Stationary distribution of the relay queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySteadyState {
    /// `π_0..=π_{N_S}`.
    pub occupancy: Vec<f64>,
    /// `r_1..=r_{N_S}`.
    pub departure_probs: Vec<f64>,
    pub arrival_prob: f64,
}

impl RelaySteadyState {
    pub fn empty(&self) -> f64 {
        self.occupancy[0]
    }

    /// Probability the queue is full when the next receiving phase starts.
    pub fn blocking(&self) -> f64 {
        let n = self.occupancy.len() - 1;
        self.occupancy[n] * (1.0 - self.departure_probs[n - 1])
    }
}

/// Product-form solution of the relay chain.
///
/// When some `r_n = 0` and `q > 0` the states below the highest such `n` are
/// transient: they get zero mass and the product form restarts at that
/// state. With `q = 1` the queue only ever grows, so all mass sits on the
/// first state that cannot move.
pub fn relay_steady_state(q: f64, r: &[f64], n_s: usize) -> Result<RelaySteadyState> {
    if n_s == 0 || r.len() != n_s {
        return Err(Error::Domain(format!(
            "expected {n_s} departure probabilities, got {}",
            r.len()
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("arrival probability {q} outside [0, 1]")));
    }
    if let Some(bad) = r.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("departure probability {bad} outside [0, 1]")));
    }
    Ok(relay_steady_state_unchecked(q, r))
}

pub(crate) fn relay_steady_state_unchecked(q: f64, r: &[f64]) -> RelaySteadyState {
    let n_s = r.len();
    let mut occupancy = vec![0.0; n_s + 1];
    if q == 0.0 {
        occupancy[0] = 1.0;
    } else if q >= 1.0 {
        let stop = r.iter().position(|&x| x == 1.0).map_or(n_s, |i| i + 1);
        occupancy[stop] = 1.0;
    } else {
        // r[n - 1] is r_n.
        let start = r.iter().rposition(|&x| x == 0.0).map_or(0, |i| i + 1);
        let log_odds = q.ln() - (-q).ln_1p();
        let mut logs = vec![f64::NEG_INFINITY; n_s + 1];
        logs[start] = 0.0;
        for n in start..n_s {
            let stay = if n == 0 { 0.0 } else { (-r[n - 1]).ln_1p() };
            logs[n + 1] = logs[n] + log_odds + stay - r[n].ln();
        }
        let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (w, l) in occupancy.iter_mut().zip(&logs) {
            *w = (l - peak).exp();
            total += *w;
        }
        for w in &mut occupancy {
            *w /= total;
        }
    }
    RelaySteadyState {
        occupancy,
        departure_probs: r.to_vec(),
        arrival_prob: q,
    }
}

/// PU departure rate given how often the relay is full at the start of a
/// receiving phase.
pub fn pu_departure_from_relay(pi_full: f64, r_full: f64, budget: &LinkBudget) -> f64 {
    budget.theta_pd + budget.relay_capture() * (1.0 - pi_full * (1.0 - r_full))
}

/// Relay arrival probability `q = ν_1 θ_PS (1 - θ_PD)`.
pub fn relay_arrival_prob(pu_busy: f64, budget: &LinkBudget) -> f64 {
    (pu_busy * budget.relay_capture()).clamp(0.0, 1.0)
}

/// SU throughput `θ_SR π_0 + θ̄_SR Σ π_n p_n`.
pub fn su_throughput(relay: &RelaySteadyState, policy: &AccessPolicy, budget: &LinkBudget) -> f64 {
    let shared: f64 = relay.occupancy[1..]
        .iter()
        .zip(&policy.probs[1..])
        .map(|(pi, p)| pi * p)
        .sum();
    budget.theta_sr * relay.occupancy[0] + budget.theta_sr_shared * shared
}

/// Damped iteration settings for closing the μ_P ↔ q loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }
}

/// A self-consistent operating point of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub mu_p: f64,
    pub mu_s: f64,
    pub min_rate: MinRate,
    pub relay_state: RelaySteadyState,
    pub pu_state: PuSteadyState,
    /// `mu_p` meets the loss constraint.
    pub feasible: bool,
    pub iterations: usize,
}

/// Lightweight result of the fixed-point loop, without the PU occupancy
/// vector (which can be millions of entries long).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OperatingPoint {
    pub mu_p: f64,
    pub mu_s: f64,
    pub relay_state: RelaySteadyState,
    pub iterations: usize,
}

/// Shared, per-config state for scoring many policies.
#[derive(Debug, Clone)]
pub(crate) struct Scorer {
    pub budget: LinkBudget,
    pub lambda_p: f64,
    pub n_p: usize,
    pub n_s: usize,
    pub min_rate: MinRate,
    pub options: FixedPointOptions,
}

impl Scorer {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let budget = link_budget(config)?;
        let min_rate = min_departure_rate(
            config.pu_arrival_rate,
            config.pu_queue_capacity,
            config.loss_threshold.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON),
        )?;
        Ok(Scorer {
            budget,
            lambda_p: config.pu_arrival_rate,
            n_p: config.pu_queue_capacity,
            n_s: config.relay_queue_capacity,
            min_rate,
            options: FixedPointOptions::default(),
        })
    }

    /// Relay state induced by assuming the PU departure rate is `mu_p`.
    pub fn relay_at(&self, mu_p: f64, r: &[f64]) -> RelaySteadyState {
        let busy = pu_summary_unchecked(self.lambda_p, mu_p.clamp(0.0, 1.0), self.n_p).busy;
        relay_steady_state_unchecked(relay_arrival_prob(busy, &self.budget), r)
    }

    /// The PU departure rate implied by a relay state.
    pub fn implied_mu_p(&self, relay: &RelaySteadyState) -> f64 {
        let n = relay.occupancy.len() - 1;
        pu_departure_from_relay(relay.occupancy[n], relay.departure_probs[n - 1], &self.budget)
    }

    pub fn check_policy(&self, policy: &AccessPolicy) -> Result<()> {
        if policy.relay_capacity() != self.n_s {
            return Err(Error::InvalidPolicy(format!(
                "policy covers {} relay states, config has capacity {}",
                policy.relay_capacity(),
                self.n_s
            )));
        }
        Ok(())
    }

    pub fn operating_point(
        &self,
        policy: &AccessPolicy,
        initial_mu_p: Option<f64>,
    ) -> Result<OperatingPoint> {
        self.check_policy(policy)?;
        let r = relay_departure_probs(policy, &self.budget);
        let lo = self.budget.theta_pd;
        let hi = self.budget.max_pu_departure();
        let mut mu = initial_mu_p.unwrap_or(hi).clamp(lo.min(hi), hi);
        let opts = self.options;
        let mut residual = f64::INFINITY;
        for it in 0..opts.max_iterations {
            let relay = self.relay_at(mu, &r);
            let next = self.implied_mu_p(&relay);
            residual = (next - mu).abs();
            if residual <= opts.tolerance {
                let mu_s = su_throughput(&relay, policy, &self.budget);
                return Ok(OperatingPoint {
                    mu_p: mu,
                    mu_s,
                    relay_state: relay,
                    iterations: it,
                });
            }
            mu += opts.damping * (next - mu);
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iterations,
            last_mu_p: mu,
            residual,
        })
    }

    pub fn feasible(&self, mu_p: f64) -> bool {
        self.min_rate.admits(mu_p)
    }

    pub fn evaluation(&self, point: OperatingPoint) -> Result<PolicyEvaluation> {
        let pu_state = pu_steady_state(self.lambda_p, point.mu_p.clamp(0.0, 1.0), self.n_p)?;
        Ok(PolicyEvaluation {
            mu_p: point.mu_p,
            mu_s: point.mu_s,
            min_rate: self.min_rate,
            feasible: self.feasible(point.mu_p),
            relay_state: point.relay_state,
            pu_state,
            iterations: point.iterations,
        })
    }
}

/// Scores a policy by iterating μ_P → ν_1 → q → π → μ_P to a fixed point,
/// starting from the largest possible PU departure rate.
pub fn evaluate_policy(config: &SystemConfig, policy: &AccessPolicy) -> Result<PolicyEvaluation> {
    let scorer = Scorer::new(config)?;
    let point = scorer.operating_point(policy, None)?;
    scorer.evaluation(point)
}

/// As [`evaluate_policy`], starting the iteration at `initial_mu_p`.
pub fn evaluate_policy_from(
    config: &SystemConfig,
    policy: &AccessPolicy,
    initial_mu_p: f64,
) -> Result<PolicyEvaluation> {
    let scorer = Scorer::new(config)?;
    let point = scorer.operating_point(policy, Some(initial_mu_p))?;
    scorer.evaluation(point)
}
