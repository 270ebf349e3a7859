//! Physical-layer link model.
//!
//! Every link is block Rayleigh fading, so a packet of `B` bits sent for
//! `T_s` seconds over bandwidth `W` gets through with probability
//! `exp(-N0 (2^(B / (W T_s)) - 1) / (P r^-kappa sigma^2))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldErrors, Result};

/// The four links of the relaying topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Link {
    /// PU source to PU destination.
    Pd,
    /// PU source to the relaying SU.
    Ps,
    /// Relaying SU to PU destination.
    Sd,
    /// Relaying SU to its own destination.
    Sr,
}

impl Link {
    pub const ALL: [Link; 4] = [Link::Pd, Link::Ps, Link::Sd, Link::Sr];

    pub fn name(self) -> &'static str {
        match self {
            Link::Pd => "pd",
            Link::Ps => "ps",
            Link::Sd => "sd",
            Link::Sr => "sr",
        }
    }

    /// Links whose transmitter is the PU source.
    pub fn from_primary(self) -> bool {
        matches!(self, Link::Pd | Link::Ps)
    }
}

/// One value per link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerLink<T> {
    pub pd: T,
    pub ps: T,
    pub sd: T,
    pub sr: T,
}

impl<T: Copy> PerLink<T> {
    pub fn splat(v: T) -> Self {
        PerLink {
            pd: v,
            ps: v,
            sd: v,
            sr: v,
        }
    }

    pub fn get(&self, link: Link) -> T {
        match link {
            Link::Pd => self.pd,
            Link::Ps => self.ps,
            Link::Sd => self.sd,
            Link::Sr => self.sr,
        }
    }

    pub fn set(&mut self, link: Link, v: T) {
        match link {
            Link::Pd => self.pd = v,
            Link::Ps => self.ps = v,
            Link::Sd => self.sd = v,
            Link::Sr => self.sr = v,
        }
    }
}

/// All physical and protocol parameters of the system. Gains are linear
/// power ratios; decibel inputs are converted when a config file is parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// PU transmit power, watts.
    pub pu_power: f64,
    /// SU transmit power, watts.
    pub su_power: f64,
    /// Slot length `T`, seconds.
    pub slot_duration: f64,
    /// Fraction of the slot used by the PU (receiving phase).
    pub beta: f64,
    /// Fraction of the relaying phase spent relaying when the SU time-shares.
    pub alpha: f64,
    /// Packet size over bandwidth, bits/Hz.
    pub bits_per_bandwidth: f64,
    /// Receiver noise power, watts.
    pub noise_power: f64,
    pub path_loss_exponent: f64,
    /// Link distances, meters.
    pub distances: PerLink<f64>,
    /// Mean fading power gains, linear.
    pub mean_gains: PerLink<f64>,
    /// Bernoulli PU arrival probability per slot.
    pub pu_arrival_rate: f64,
    pub pu_queue_capacity: usize,
    pub relay_queue_capacity: usize,
    /// Ceiling on the probability that the PU queue is full.
    pub loss_threshold: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            pu_power: 0.1,
            su_power: 0.1,
            slot_duration: 0.1,
            beta: 0.5,
            alpha: 0.5,
            bits_per_bandwidth: 3e-3,
            noise_power: 1e-5,
            path_loss_exponent: 2.0,
            distances: PerLink {
                pd: 200.0,
                ps: 100.0,
                sd: 100.0,
                sr: 100.0,
            },
            mean_gains: PerLink::splat(0.1),
            pu_arrival_rate: 0.5,
            pu_queue_capacity: 100,
            relay_queue_capacity: 10,
            loss_threshold: 0.01,
        }
    }
}

fn unit_interval(errs: &mut FieldErrors, field: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        errs.push(field, format!("must lie in [0, 1], got {v}"));
    }
}

fn strictly_positive(errs: &mut FieldErrors, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(field, format!("must be positive and finite, got {v}"));
    }
}

impl SystemConfig {
    /// Collects every violated invariant.
    pub fn violations(&self) -> FieldErrors {
        let mut errs = FieldErrors::default();
        strictly_positive(&mut errs, "pu_power", self.pu_power);
        strictly_positive(&mut errs, "su_power", self.su_power);
        strictly_positive(&mut errs, "slot_duration", self.slot_duration);
        strictly_positive(&mut errs, "noise_power", self.noise_power);
        strictly_positive(&mut errs, "path_loss_exponent", self.path_loss_exponent);
        if !(self.bits_per_bandwidth >= 0.0 && self.bits_per_bandwidth.is_finite()) {
            errs.push(
                "bits_per_bandwidth",
                format!("must be non-negative, got {}", self.bits_per_bandwidth),
            );
        }
        for link in Link::ALL {
            strictly_positive(
                &mut errs,
                &format!("dist_{}", link.name()),
                self.distances.get(link),
            );
            strictly_positive(
                &mut errs,
                &format!("gain_{}", link.name()),
                self.mean_gains.get(link),
            );
        }
        unit_interval(&mut errs, "beta", self.beta);
        unit_interval(&mut errs, "alpha", self.alpha);
        unit_interval(&mut errs, "pu_arrival_rate", self.pu_arrival_rate);
        unit_interval(&mut errs, "loss_threshold", self.loss_threshold);
        if self.pu_queue_capacity == 0 {
            errs.push("pu_queue_capacity", "must be at least 1");
        }
        if self.relay_queue_capacity == 0 {
            errs.push("relay_queue_capacity", "must be at least 1");
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        self.violations().into_result()
    }

    fn tx_power(&self, link: Link) -> f64 {
        if link.from_primary() {
            self.pu_power
        } else {
            self.su_power
        }
    }
}

/// Probability that one packet sent on `link` for `tx_duration` seconds is
/// decoded.
///
/// A duration so short that the required spectral efficiency overflows
/// yields `0.0`, the correct limit.
pub fn success_probability(config: &SystemConfig, link: Link, tx_duration: f64) -> Result<f64> {
    if !(tx_duration > 0.0) {
        return Err(Error::Domain(format!(
            "transmission duration must be positive, got {tx_duration}"
        )));
    }
    let rate = config.bits_per_bandwidth / tx_duration;
    let snr_needed = rate.exp2() - 1.0;
    let mean_snr_scale = config.tx_power(link)
        * config.distances.get(link).powf(-config.path_loss_exponent)
        * config.mean_gains.get(link);
    let exponent = -config.noise_power * snr_needed / mean_snr_scale;
    let p = exponent.exp();
    Ok(if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) })
}

/// Per-slot success probabilities of every link and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// PU direct delivery during the receiving phase.
    pub theta_pd: f64,
    /// PU packet overheard by the relay during the receiving phase.
    pub theta_ps: f64,
    /// Relay forwards using the whole relaying phase.
    pub theta_sd: f64,
    /// Relay forwards while time-sharing with the SU's own packet.
    pub theta_sd_shared: f64,
    /// SU own packet using the whole relaying phase.
    pub theta_sr: f64,
    /// SU own packet while time-sharing.
    pub theta_sr_shared: f64,
}

impl LinkBudget {
    /// Probability that a PU packet reaches the relay's buffer attempt,
    /// i.e. the direct path fails and the overhearing succeeds.
    pub fn relay_capture(&self) -> f64 {
        self.theta_ps * (1.0 - self.theta_pd)
    }

    /// PU departure rate when the relay never blocks.
    pub fn max_pu_departure(&self) -> f64 {
        self.theta_pd + self.relay_capture()
    }

    /// Loss of relay success caused by time sharing.
    pub fn sd_sharing_penalty(&self) -> f64 {
        self.theta_sd - self.theta_sd_shared
    }
}

fn probability_or_zero(config: &SystemConfig, link: Link, duration: f64) -> Result<f64> {
    if duration > 0.0 {
        success_probability(config, link, duration)
    } else {
        Ok(0.0)
    }
}

/// Assembles the six success probabilities. A phase with zero length (for
/// example `beta = 1` leaves no relaying time) gets probability zero.
pub fn link_budget(config: &SystemConfig) -> Result<LinkBudget> {
    config.validate()?;
    let t = config.slot_duration;
    let receive = config.beta * t;
    let relay = (1.0 - config.beta) * t;
    let relay_shared = config.alpha * relay;
    let own_shared = (1.0 - config.alpha) * relay;
    Ok(LinkBudget {
        theta_pd: probability_or_zero(config, Link::Pd, receive)?,
        theta_ps: probability_or_zero(config, Link::Ps, receive)?,
        theta_sd: probability_or_zero(config, Link::Sd, relay)?,
        theta_sd_shared: probability_or_zero(config, Link::Sd, relay_shared)?,
        theta_sr: probability_or_zero(config, Link::Sr, relay)?,
        theta_sr_shared: probability_or_zero(config, Link::Sr, own_shared)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit evaluations of the outage formula at the default parameters.
    const THETA_FULL_100M: f64 = 0.653_993_668_731_022;
    const THETA_SHARED_100M: f64 = 0.420_063_820_674_951_5;
    const THETA_PD_200M: f64 = 0.182_933_892_669_998_8;

    #[test]
    fn default_budget_matches_high_precision_values() {
        let b = link_budget(&SystemConfig::default()).unwrap();
        assert!((b.theta_sd - THETA_FULL_100M).abs() < 1e-13);
        assert!((b.theta_sr - THETA_FULL_100M).abs() < 1e-13);
        assert!((b.theta_ps - THETA_FULL_100M).abs() < 1e-13);
        assert!((b.theta_sd_shared - THETA_SHARED_100M).abs() < 1e-13);
        assert!((b.theta_sr_shared - THETA_SHARED_100M).abs() < 1e-13);
        assert!((b.theta_pd - THETA_PD_200M).abs() < 1e-13);
    }

    #[test]
    fn zero_rate_always_succeeds() {
        let cfg = SystemConfig {
            bits_per_bandwidth: 0.0,
            ..SystemConfig::default()
        };
        for link in Link::ALL {
            assert_eq!(success_probability(&cfg, link, 0.01).unwrap(), 1.0);
        }
    }

    #[test]
    fn vanishing_duration_underflows_to_zero() {
        let cfg = SystemConfig::default();
        assert_eq!(success_probability(&cfg, Link::Sd, 1e-9).unwrap(), 0.0);
        assert_eq!(success_probability(&cfg, Link::Sd, 1e-300).unwrap(), 0.0);
        assert!(success_probability(&cfg, Link::Sd, 0.0).is_err());
        assert!(success_probability(&cfg, Link::Sd, -1.0).is_err());
    }

    #[test]
    fn no_relaying_time_zeroes_relay_links() {
        let cfg = SystemConfig {
            beta: 1.0,
            ..SystemConfig::default()
        };
        let b = link_budget(&cfg).unwrap();
        assert_eq!(b.theta_sd, 0.0);
        assert_eq!(b.theta_sd_shared, 0.0);
        assert_eq!(b.theta_sr, 0.0);
        assert_eq!(b.theta_sr_shared, 0.0);
        assert!(b.theta_pd > 0.0);
    }

    #[test]
    fn gain_and_noise_scale_together() {
        let base = SystemConfig::default();
        let mut scaled = base.clone();
        scaled.noise_power *= 10.0;
        scaled.mean_gains = PerLink::splat(1.0);
        let a = link_budget(&base).unwrap();
        let b = link_budget(&scaled).unwrap();
        assert!((a.theta_sd - b.theta_sd).abs() < 1e-14);
        assert!((a.theta_sr_shared - b.theta_sr_shared).abs() < 1e-14);
        assert!((a.theta_ps - b.theta_ps).abs() < 1e-14);
    }

    #[test]
    fn validation_names_every_bad_field() {
        let cfg = SystemConfig {
            beta: 1.5,
            su_power: -1.0,
            relay_queue_capacity: 0,
            ..SystemConfig::default()
        };
        let errs = cfg.violations();
        let fields: Vec<_> = errs.fields().collect();
        assert_eq!(fields, vec!["su_power", "beta", "relay_queue_capacity"]);
    }
}
