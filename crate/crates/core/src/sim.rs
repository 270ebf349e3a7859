//! Slot-level Monte Carlo simulation of the two-phase relaying protocol.
//!
//! Each run owns a ChaCha8 stream seeded from its `seed`, and every slot
//! (warm-up included) consumes exactly six uniforms in a fixed order:
//! P→D, P→S, SU access coin, relay delivery, SU delivery, PU arrival. Draws
//! are made whether or not the event they decide can happen, so the stream
//! position depends only on the slot index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{link_budget, LinkBudget, SystemConfig};
use crate::queue::{evaluate_policy, AccessPolicy, PolicyEvaluation};

pub const DEFAULT_WARMUP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub n_slots: u64,
    pub seed: u64,
    /// Slots simulated before statistics are collected.
    pub warmup: u64,
}

impl SimOptions {
    pub fn new(n_slots: u64, seed: u64) -> Self {
        SimOptions {
            n_slots,
            seed,
            warmup: DEFAULT_WARMUP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub slots: u64,
    pub rng_seed: u64,
    pub pu_arrivals: u64,
    pub pu_drops: u64,
    /// Slots that started with a packet in the PU queue.
    pub pu_busy_slots: u64,
    pub pu_direct_deliveries: u64,
    pub pu_relay_handoffs: u64,
    pub relay_deliveries: u64,
    pub su_packets_delivered: u64,
    /// Queue lengths when measurement started and when it ended.
    pub pu_queue_start: u64,
    pub pu_queue_end: u64,
    pub relay_queue_start: u64,
    pub relay_queue_end: u64,
    /// PU occupancy at the end of each slot.
    pub pu_queue_histogram: Vec<u64>,
    /// Relay occupancy at the end of each receiving phase.
    pub relay_queue_histogram: Vec<u64>,
}

impl SimStats {
    fn rate(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// PU packets leaving the PU queue per busy slot.
    pub fn measured_mu_p(&self) -> f64 {
        Self::rate(self.pu_direct_deliveries + self.pu_relay_handoffs, self.pu_busy_slots)
    }

    pub fn measured_mu_s(&self) -> f64 {
        Self::rate(self.su_packets_delivered, self.slots)
    }

    /// Fraction of slots ending with the PU queue full.
    pub fn measured_block_fraction(&self) -> f64 {
        Self::rate(*self.pu_queue_histogram.last().unwrap_or(&0), self.slots)
    }

    /// Fraction of PU arrivals turned away.
    pub fn drop_fraction(&self) -> f64 {
        Self::rate(self.pu_drops, self.pu_arrivals)
    }

    pub fn pu_distribution(&self) -> Vec<f64> {
        normalize(&self.pu_queue_histogram)
    }

    pub fn relay_distribution(&self) -> Vec<f64> {
        normalize(&self.relay_queue_histogram)
    }

    /// Packets admitted to the PU queue equal those that left it plus growth.
    pub fn pu_conserved(&self) -> bool {
        let admitted = self.pu_arrivals - self.pu_drops;
        admitted + self.pu_queue_start
            == self.pu_direct_deliveries + self.pu_relay_handoffs + self.pu_queue_end
    }

    pub fn relay_conserved(&self) -> bool {
        self.pu_relay_handoffs + self.relay_queue_start == self.relay_deliveries + self.relay_queue_end
    }
}

fn normalize(hist: &[u64]) -> Vec<f64> {
    let total: u64 = hist.iter().sum();
    hist.iter().map(|&c| SimStats::rate(c, total)).collect()
}

struct Slot {
    u_pd: f64,
    u_ps: f64,
    u_access: f64,
    u_relay: f64,
    u_su: f64,
    u_arrival: f64,
}

impl Slot {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Slot {
            u_pd: rng.random(),
            u_ps: rng.random(),
            u_access: rng.random(),
            u_relay: rng.random(),
            u_su: rng.random(),
            u_arrival: rng.random(),
        }
    }
}

struct Protocol<'a> {
    budget: &'a LinkBudget,
    probs: &'a [f64],
    lambda_p: f64,
    n_p: u64,
    n_s: u64,
    pu: u64,
    relay: u64,
}

#[derive(Default)]
struct SlotOutcome {
    busy: bool,
    direct: bool,
    handoff: bool,
    relayed: bool,
    su_delivered: bool,
    arrival: bool,
    dropped: bool,
    relay_seen: u64,
}

impl Protocol<'_> {
    fn step(&mut self, u: &Slot) -> SlotOutcome {
        let b = self.budget;
        let mut out = SlotOutcome::default();

        // Receiving phase. Admission is judged on the relay occupancy left
        // by the previous relaying phase.
        if self.pu > 0 {
            out.busy = true;
            if u.u_pd < b.theta_pd {
                out.direct = true;
            } else if u.u_ps < b.theta_ps && self.relay < self.n_s {
                out.handoff = true;
                self.relay += 1;
            }
            if out.direct || out.handoff {
                self.pu -= 1;
            }
        }
        out.relay_seen = self.relay;

        // Relaying phase.
        if self.relay == 0 {
            out.su_delivered = u.u_su < b.theta_sr;
        } else {
            let shares = u.u_access < self.probs[self.relay as usize];
            let (relay_ok, su_ok) = if shares {
                (b.theta_sd_shared, b.theta_sr_shared)
            } else {
                (b.theta_sd, 0.0)
            };
            out.su_delivered = u.u_su < su_ok;
            if u.u_relay < relay_ok {
                out.relayed = true;
                self.relay -= 1;
            }
        }

        // PU arrival after service.
        if u.u_arrival < self.lambda_p {
            out.arrival = true;
            if self.pu < self.n_p {
                self.pu += 1;
            } else {
                out.dropped = true;
            }
        }
        out
    }
}

/// Simulates `n_slots` measured slots after the default warm-up.
pub fn simulate(
    config: &SystemConfig,
    policy: &AccessPolicy,
    n_slots: u64,
    seed: u64,
) -> Result<SimStats> {
    simulate_with(config, policy, &SimOptions::new(n_slots, seed))
}

pub fn simulate_with(config: &SystemConfig, policy: &AccessPolicy, opts: &SimOptions) -> Result<SimStats> {
    let budget = link_budget(config)?;
    if opts.n_slots == 0 {
        return Err(Error::Domain("n_slots must be at least 1".into()));
    }
    if policy.relay_capacity() != config.relay_queue_capacity {
        return Err(Error::InvalidPolicy(format!(
            "policy covers {} relay states, config has capacity {}",
            policy.relay_capacity(),
            config.relay_queue_capacity
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut proto = Protocol {
        budget: &budget,
        probs: policy.probs(),
        lambda_p: config.pu_arrival_rate,
        n_p: config.pu_queue_capacity as u64,
        n_s: config.relay_queue_capacity as u64,
        pu: 0,
        relay: 0,
    };
    for _ in 0..opts.warmup {
        proto.step(&Slot::draw(&mut rng));
    }

    let mut stats = SimStats {
        slots: opts.n_slots,
        rng_seed: opts.seed,
        pu_arrivals: 0,
        pu_drops: 0,
        pu_busy_slots: 0,
        pu_direct_deliveries: 0,
        pu_relay_handoffs: 0,
        relay_deliveries: 0,
        su_packets_delivered: 0,
        pu_queue_start: proto.pu,
        pu_queue_end: 0,
        relay_queue_start: proto.relay,
        relay_queue_end: 0,
        pu_queue_histogram: vec![0; config.pu_queue_capacity + 1],
        relay_queue_histogram: vec![0; config.relay_queue_capacity + 1],
    };
    for _ in 0..opts.n_slots {
        let out = proto.step(&Slot::draw(&mut rng));
        stats.pu_busy_slots += out.busy as u64;
        stats.pu_direct_deliveries += out.direct as u64;
        stats.pu_relay_handoffs += out.handoff as u64;
        stats.relay_deliveries += out.relayed as u64;
        stats.su_packets_delivered += out.su_delivered as u64;
        stats.pu_arrivals += out.arrival as u64;
        stats.pu_drops += out.dropped as u64;
        stats.relay_queue_histogram[out.relay_seen as usize] += 1;
        stats.pu_queue_histogram[proto.pu as usize] += 1;
    }
    stats.pu_queue_end = proto.pu;
    stats.relay_queue_end = proto.relay;
    Ok(stats)
}

/// An analytic-minus-empirical difference with a 3σ binomial half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub gap: f64,
    pub half_width: f64,
}

impl Gap {
    fn binomial(analytic: f64, measured: f64, trials: u64) -> Self {
        Gap {
            gap: measured - analytic,
            half_width: half_width(analytic, trials),
        }
    }

    pub fn within(&self) -> bool {
        self.gap.abs() <= self.half_width
    }
}

fn half_width(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    3.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

/// Total variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    /// TV distance between the analytic and empirical relay occupancy.
    pub relay_tv: Gap,
    pub pu_full: Gap,
    pub mu_p: Gap,
    pub mu_s: Gap,
    pub stats: SimStats,
}

impl SeedComparison {
    pub fn within_bounds(&self) -> bool {
        self.relay_tv.gap <= self.relay_tv.half_width
            && self.pu_full.within()
            && self.mu_p.within()
            && self.mu_s.within()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub analytic: PolicyEvaluation,
    pub runs: Vec<SeedComparison>,
}

impl ComparisonReport {
    pub fn max_relay_tv(&self) -> f64 {
        self.runs.iter().map(|r| r.relay_tv.gap).fold(0.0, f64::max)
    }

    pub fn max_mu_s_gap(&self) -> f64 {
        self.runs.iter().map(|r| r.mu_s.gap.abs()).fold(0.0, f64::max)
    }

    pub fn all_within_bounds(&self) -> bool {
        self.runs.iter().all(SeedComparison::within_bounds)
    }
}

fn seed_comparison(analytic: &PolicyEvaluation, stats: SimStats) -> SeedComparison {
    let pi = &analytic.relay_state.occupancy;
    let tv = total_variation(pi, &stats.relay_distribution());
    // Sum of per-state 3σ widths bounds the TV noise from above.
    let tv_width = 0.5 * pi.iter().map(|&p| half_width(p, stats.slots)).sum::<f64>();
    // Nothing to compare against when the PU never transmitted.
    let mu_p = if stats.pu_busy_slots == 0 {
        Gap { gap: 0.0, half_width: 0.0 }
    } else {
        Gap::binomial(analytic.mu_p, stats.measured_mu_p(), stats.pu_busy_slots)
    };
    SeedComparison {
        seed: stats.rng_seed,
        relay_tv: Gap {
            gap: tv,
            half_width: tv_width,
        },
        pu_full: Gap::binomial(analytic.pu_state.full, stats.measured_block_fraction(), stats.slots),
        mu_p,
        mu_s: Gap::binomial(analytic.mu_s, stats.measured_mu_s(), stats.slots),
        stats,
    }
}

/// Evaluates `policy` analytically and simulates it once per seed, in
/// parallel; runs are reported in seed order.
pub fn compare(
    config: &SystemConfig,
    policy: &AccessPolicy,
    n_slots: u64,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if seeds.is_empty() {
        return Err(Error::Domain("at least one seed is required".into()));
    }
    let analytic = evaluate_policy(config, policy)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| simulate(config, policy, n_slots, seed).map(|s| seed_comparison(&analytic, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { analytic, runs })
}
