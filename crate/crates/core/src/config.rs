//! Flat TOML configuration files.
//!
//! Keys match [`SystemConfig`] field names, with per-link distances and gains
//! spelled `dist_pd`, `gain_ps`, ... A gain may instead be given in decibels
//! as `gain_pd_db`. Missing keys take their default; unknown keys are errors.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{Error, FieldErrors, Result};
use crate::link::{Link, SystemConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    pu_power: Option<f64>,
    su_power: Option<f64>,
    slot_duration: Option<f64>,
    beta: Option<f64>,
    alpha: Option<f64>,
    bits_per_bandwidth: Option<f64>,
    noise_power: Option<f64>,
    path_loss_exponent: Option<f64>,
    dist_pd: Option<f64>,
    dist_ps: Option<f64>,
    dist_sd: Option<f64>,
    dist_sr: Option<f64>,
    gain_pd: Option<f64>,
    gain_ps: Option<f64>,
    gain_sd: Option<f64>,
    gain_sr: Option<f64>,
    gain_pd_db: Option<f64>,
    gain_ps_db: Option<f64>,
    gain_sd_db: Option<f64>,
    gain_sr_db: Option<f64>,
    pu_arrival_rate: Option<f64>,
    pu_queue_capacity: Option<i64>,
    relay_queue_capacity: Option<i64>,
    loss_threshold: Option<f64>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

fn capacity(errs: &mut FieldErrors, field: &str, v: Option<i64>, default: usize) -> usize {
    match v {
        None => default,
        Some(n) if n >= 1 => n as usize,
        Some(n) => {
            errs.push(field, format!("must be at least 1, got {n}"));
            default
        }
    }
}

impl RawConfig {
    fn gain(&self, link: Link) -> (Option<f64>, Option<f64>) {
        match link {
            Link::Pd => (self.gain_pd, self.gain_pd_db),
            Link::Ps => (self.gain_ps, self.gain_ps_db),
            Link::Sd => (self.gain_sd, self.gain_sd_db),
            Link::Sr => (self.gain_sr, self.gain_sr_db),
        }
    }

    fn dist(&self, link: Link) -> Option<f64> {
        match link {
            Link::Pd => self.dist_pd,
            Link::Ps => self.dist_ps,
            Link::Sd => self.dist_sd,
            Link::Sr => self.dist_sr,
        }
    }

    fn resolve(self) -> Result<SystemConfig> {
        let d = SystemConfig::default();
        let mut errs = FieldErrors::default();
        let mut cfg = SystemConfig {
            pu_power: self.pu_power.unwrap_or(d.pu_power),
            su_power: self.su_power.unwrap_or(d.su_power),
            slot_duration: self.slot_duration.unwrap_or(d.slot_duration),
            beta: self.beta.unwrap_or(d.beta),
            alpha: self.alpha.unwrap_or(d.alpha),
            bits_per_bandwidth: self.bits_per_bandwidth.unwrap_or(d.bits_per_bandwidth),
            noise_power: self.noise_power.unwrap_or(d.noise_power),
            path_loss_exponent: self.path_loss_exponent.unwrap_or(d.path_loss_exponent),
            distances: d.distances,
            mean_gains: d.mean_gains,
            pu_arrival_rate: self.pu_arrival_rate.unwrap_or(d.pu_arrival_rate),
            pu_queue_capacity: capacity(&mut errs, "pu_queue_capacity", self.pu_queue_capacity, d.pu_queue_capacity),
            relay_queue_capacity: capacity(
                &mut errs,
                "relay_queue_capacity",
                self.relay_queue_capacity,
                d.relay_queue_capacity,
            ),
            loss_threshold: self.loss_threshold.unwrap_or(d.loss_threshold),
        };
        for link in Link::ALL {
            if let Some(r) = self.dist(link) {
                cfg.distances.set(link, r);
            }
            match self.gain(link) {
                (Some(_), Some(_)) => errs.push(
                    format!("gain_{}", link.name()),
                    format!("given both as gain_{0} and gain_{0}_db", link.name()),
                ),
                (Some(g), None) => cfg.mean_gains.set(link, g),
                (None, Some(db)) => cfg.mean_gains.set(link, db_to_linear(db)),
                (None, None) => {}
            }
        }
        errs.0.extend(cfg.violations().0);
        errs.into_result().map(|()| cfg)
    }
}

fn parse_error(origin: &str, err: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: origin.into(),
        message: err.to_string().trim_end().to_string(),
    }
}

/// Parses config text; `origin` names the source in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<SystemConfig> {
    toml::from_str::<RawConfig>(text)
        .map_err(|e| parse_error(origin, e))?
        .resolve()
}

/// Builds a config from an already parsed key/value table.
pub fn config_from_table(table: &Table, origin: &str) -> Result<SystemConfig> {
    table
        .clone()
        .try_into::<RawConfig>()
        .map_err(|e| parse_error(origin, e))?
        .resolve()
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse::<Table>()
        .map_err(|e| parse_error(&path.display().to_string(), e))
}

pub fn load_config(path: &Path) -> Result<SystemConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, &path.display().to_string())
}

/// Parses an override value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `key=value` overrides. Setting one form of a gain removes the
/// other so the override wins over the file.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let Some((key, raw)) = item.split_once('=') else {
            return Err(parse_error("--set", format!("expected key=value, got {item:?}")));
        };
        set_key(table, key.trim(), override_value(raw.trim()));
    }
    Ok(())
}

fn set_key(table: &mut Table, key: &str, value: Value) {
    if let Some(base) = key.strip_suffix("_db") {
        table.remove(base);
    } else if key.starts_with("gain_") {
        table.remove(&format!("{key}_db"));
    }
    table.insert(key.to_string(), value);
}

/// Layers `top` over `table` with the same replacement rules as overrides.
pub fn merge_tables(table: &mut Table, top: Table) {
    for (k, v) in top {
        set_key(table, &k, v);
    }
}

/// Loads an optional config file and applies overrides on top.
pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<SystemConfig> {
    if overrides.is_empty() {
        return match path {
            Some(p) => load_config(p),
            None => Ok(SystemConfig::default()),
        };
    }
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    apply_overrides(&mut table, overrides)?;
    let origin = path.map_or_else(|| "--set".to_string(), |p| p.display().to_string());
    config_from_table(&table, &origin)
}

/// Normalized flat form of a config with linear gains, in a fixed key order.
pub fn to_table(cfg: &SystemConfig) -> Table {
    let mut t = Table::new();
    let mut put = |k: &str, v: Value| {
        t.insert(k.to_string(), v);
    };
    put("pu_power", cfg.pu_power.into());
    put("su_power", cfg.su_power.into());
    put("slot_duration", cfg.slot_duration.into());
    put("beta", cfg.beta.into());
    put("alpha", cfg.alpha.into());
    put("bits_per_bandwidth", cfg.bits_per_bandwidth.into());
    put("noise_power", cfg.noise_power.into());
    put("path_loss_exponent", cfg.path_loss_exponent.into());
    for link in Link::ALL {
        put(&format!("dist_{}", link.name()), cfg.distances.get(link).into());
        put(&format!("gain_{}", link.name()), cfg.mean_gains.get(link).into());
    }
    put("pu_arrival_rate", cfg.pu_arrival_rate.into());
    put("pu_queue_capacity", (cfg.pu_queue_capacity as i64).into());
    put("relay_queue_capacity", (cfg.relay_queue_capacity as i64).into());
    put("loss_threshold", cfg.loss_threshold.into());
    t
}

pub fn to_toml_string(cfg: &SystemConfig) -> String {
    toml::to_string(&to_table(cfg)).expect("flat table of numbers serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(err: Error) -> Vec<String> {
        match err {
            Error::InvalidConfig(f) => f.fields().map(str::to_string).collect(),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(parse_config("", "t").unwrap(), SystemConfig::default());
    }

    #[test]
    fn db_gains_convert() {
        let cfg = parse_config("gain_pd_db = -20\ngain_sr = 0.5\n", "t").unwrap();
        assert!((cfg.mean_gains.pd - 0.01).abs() < 1e-15);
        assert_eq!(cfg.mean_gains.sr, 0.5);
        assert!((linear_to_db(db_to_linear(-13.0)) + 13.0).abs() < 1e-12);
    }

    #[test]
    fn integers_accepted_for_reals() {
        let cfg = parse_config("dist_pd = 300\n", "t").unwrap();
        assert_eq!(cfg.distances.pd, 300.0);
    }

    #[test]
    fn every_violation_is_named() {
        let err = parse_config("beta = 1.5\nrelay_queue_capacity = 0\ngain_ps = 1\ngain_ps_db = 0\n", "t")
            .unwrap_err();
        let f = fields(err);
        for name in ["beta", "relay_queue_capacity", "gain_ps"] {
            assert!(f.iter().any(|x| x == name), "{name} missing from {f:?}");
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let err = parse_config("lamda = 0.3\n", "cfg.toml").unwrap_err();
        assert_eq!(err.kind(), "parse");
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = parse_config("beta = 0.5\nalpha = = 1\n", "cfg.toml").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut t: Table = "gain_pd = 0.1\nbeta = 0.3\n".parse().unwrap();
        apply_overrides(&mut t, &["gain_pd_db=-20".into(), "beta = 0.4".into()]).unwrap();
        let cfg = config_from_table(&t, "t").unwrap();
        assert!((cfg.mean_gains.pd - 0.01).abs() < 1e-15);
        assert_eq!(cfg.beta, 0.4);
        assert!(apply_overrides(&mut t, &["beta".into()]).is_err());
    }

    #[test]
    fn normalized_table_round_trips() {
        let mut cfg = SystemConfig::default();
        cfg.mean_gains.pd = 0.01;
        cfg.pu_queue_capacity = 1_000_000;
        let back = parse_config(&to_toml_string(&cfg), "t").unwrap();
        assert_eq!(back, cfg);
    }
}
