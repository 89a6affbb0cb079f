//! Flat `key = value` configuration files and the resolved simulation config.
//!
//! The format is line oriented: `#` starts a comment, keys are dotted
//! identifiers, and distribution values look like `uniform(1, 100)` or a bare
//! number for a constant. Fractional constants that feed integer money math
//! (`u`, `budget`) are parsed as exact decimal rationals, never as floats.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::money::Amount;
use crate::policy::PolicyBounds;
use crate::rng::Stream;
use crate::security::Probability;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("missing required config key `{0}`")]
    Missing(String),
    #[error("unknown config key `{0}`")]
    Unknown(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Parses a nonnegative decimal or scientific literal into an exact ratio
/// `(numerator, denominator)` with a power-of-ten denominator.
pub fn decimal_to_ratio(text: &str) -> Result<(BigUint, BigUint), String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty number".into());
    }
    if text.starts_with('-') {
        return Err("negative value not allowed".into());
    }
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => {
            let exp: i32 = e.parse().map_err(|_| format!("bad exponent `{e}`"))?;
            (m, exp)
        }
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    let digits: String = [int_part, frac_part].concat();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad number `{text}`"));
    }
    let mut num: BigUint = digits.parse().map_err(|_| format!("bad number `{text}`"))?;
    let mut den = BigUint::one();
    let scale = exp - frac_part.len() as i32;
    let ten = BigUint::from(10u32);
    if scale >= 0 {
        num *= ten.pow(scale as u32);
    } else {
        den = ten.pow((-scale) as u32);
    }
    Ok((num, den))
}

/// Integer-valued distribution for agent attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntDist {
    Constant(u64),
    /// Uniform over the inclusive range `[lo, hi]`.
    Uniform {
        lo: u64,
        hi: u64,
    },
}

impl IntDist {
    pub fn sample(&self, stream: &mut Stream) -> u64 {
        match *self {
            IntDist::Constant(v) => v,
            IntDist::Uniform { lo, hi } => stream.range_u64(lo, hi),
        }
    }
}

/// Real-valued distribution (duty reliability).
#[derive(Clone, Debug, PartialEq)]
pub enum FloatDist {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl FloatDist {
    pub fn sample(&self, stream: &mut Stream) -> f64 {
        match *self {
            FloatDist::Constant(v) => v,
            FloatDist::Uniform { lo, hi } => stream.uniform_f64(lo, hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentDistributions {
    pub demand: IntDist,
    pub fear_line: IntDist,
    pub balance: IntDist,
    pub duty_reliability: FloatDist,
}

/// How the per-interval mint shrinks every `mint_period` intervals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecaySchedule {
    /// Divide by two each period; zero once below one base unit.
    Halving,
    /// Subtract two base units each period, saturating at zero.
    Subtract,
}

/// Optional mid-run demand shock: at `height`, every agent's demand rate is
/// multiplied by `factor` (floored to an integer).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemandShock {
    pub height: u64,
    pub factor: f64,
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub population: u32,
    pub intervals: u64,
    pub seed: u64,
    pub b: f64,
    /// Ideal usage coefficient of the price rule, as an exact ratio.
    pub u: Ratio<BigUint>,
    pub avgq_window: u32,
    pub avq_initial: u64,
    pub warmup: u64,
    pub gpl_initial: u64,
    pub i_initial: f64,
    pub bounds: PolicyBounds,
    pub fee: Amount,
    pub mint_initial: Amount,
    pub mint_decay: DecaySchedule,
    pub mint_period: u64,
    pub qmax: u64,
    pub m_min: u64,
    pub t_frac: f64,
    pub budget: Probability,
    pub adversary_fraction: f64,
    pub agents: AgentDistributions,
    pub shock: Option<DemandShock>,
    pub oplog: bool,
    /// Resolved `key = value` entries, including applied defaults; echoed
    /// into the run manifest so a run can be reproduced from it alone.
    raw: BTreeMap<String, String>,
}

/// Canonical key order for manifests and documentation.
const KEY_ORDER: &[&str] = &[
    "population",
    "intervals",
    "seed",
    "b",
    "u",
    "avgq_window",
    "avq_initial",
    "warmup",
    "gpl_initial",
    "gpl_min",
    "gpl_max",
    "i_initial",
    "i_min",
    "i_max",
    "fee",
    "mint_initial",
    "mint_decay",
    "mint_period",
    "qmax",
    "m_min",
    "t_frac",
    "budget",
    "adversary_fraction",
    "agents.demand",
    "agents.fear_line",
    "agents.balance",
    "agents.duty_reliability",
    "shock.height",
    "shock.demand_factor",
    "oplog",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("b", "2"),
    ("u", "0.013"),
    ("avgq_window", "50"),
    ("avq_initial", "5000000"),
    ("warmup", "10"),
    ("gpl_initial", "10"),
    ("gpl_min", "10"),
    ("gpl_max", "10000"),
    ("i_initial", "0.1"),
    ("i_min", "0.0001"),
    ("i_max", "0.8"),
    ("fee", "1"),
    ("mint_initial", "50000000000"),
    ("mint_decay", "halving"),
    ("mint_period", "100"),
    ("qmax", "5000"),
    ("m_min", "20"),
    ("t_frac", "0.7"),
    ("budget", "1e-6"),
    ("adversary_fraction", "0.5"),
    ("agents.demand", "uniform(1, 100)"),
    ("agents.fear_line", "uniform(50, 1000)"),
    ("agents.balance", "uniform(1000, 100000)"),
    ("agents.duty_reliability", "1"),
    ("oplog", "false"),
];

impl SimConfig {
    /// Parses config text; `seed_override` (the CLI `--seed`) wins over the
    /// file's `seed` key. A seed must come from one of the two — there is no
    /// entropy source.
    pub fn parse(text: &str, seed_override: Option<u64>) -> Result<SimConfig, ConfigError> {
        let mut raw: BTreeMap<String, String> = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();

        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KEY_ORDER.contains(&key.as_str()) {
                return Err(ConfigError::Unknown(key));
            }
            if value.is_empty() {
                return Err(ConfigError::Parse {
                    line: idx + 1,
                    msg: format!("empty value for `{key}`"),
                });
            }
            raw.insert(key, value);
        }

        if let Some(seed) = seed_override {
            raw.insert("seed".into(), seed.to_string());
        }
        Self::resolve(raw)
    }

    fn resolve(raw: BTreeMap<String, String>) -> Result<SimConfig, ConfigError> {
        let get = |key: &str| -> Result<&str, ConfigError> {
            raw.get(key)
                .map(|s| s.as_str())
                .ok_or_else(|| ConfigError::Missing(key.into()))
        };
        let val_err = |key: &str, msg: String| ConfigError::Value {
            key: key.into(),
            msg,
        };

        let population: u32 =
            parse_num(get("population")?).map_err(|e| val_err("population", e))?;
        let intervals: u64 = parse_num(get("intervals")?).map_err(|e| val_err("intervals", e))?;
        let seed: u64 = parse_num(get("seed")?)
            .map_err(|e| val_err("seed", format!("{e} (pass --seed or set `seed`)")))?;
        let b: f64 = parse_float(get("b")?).map_err(|e| val_err("b", e))?;
        let (u_num, u_den) = decimal_to_ratio(get("u")?).map_err(|e| val_err("u", e))?;
        let avgq_window: u32 =
            parse_num(get("avgq_window")?).map_err(|e| val_err("avgq_window", e))?;
        let avq_initial: u64 =
            parse_num(get("avq_initial")?).map_err(|e| val_err("avq_initial", e))?;
        let warmup: u64 = parse_num(get("warmup")?).map_err(|e| val_err("warmup", e))?;
        let gpl_initial: u64 =
            parse_num(get("gpl_initial")?).map_err(|e| val_err("gpl_initial", e))?;
        let gpl_min: u64 = parse_num(get("gpl_min")?).map_err(|e| val_err("gpl_min", e))?;
        let gpl_max: u64 = parse_num(get("gpl_max")?).map_err(|e| val_err("gpl_max", e))?;
        let i_initial: f64 = parse_float(get("i_initial")?).map_err(|e| val_err("i_initial", e))?;
        let i_min: f64 = parse_float(get("i_min")?).map_err(|e| val_err("i_min", e))?;
        let i_max: f64 = parse_float(get("i_max")?).map_err(|e| val_err("i_max", e))?;
        let fee = parse_amount(get("fee")?).map_err(|e| val_err("fee", e))?;
        let mint_initial =
            parse_amount(get("mint_initial")?).map_err(|e| val_err("mint_initial", e))?;
        let mint_decay = match get("mint_decay")? {
            "halving" => DecaySchedule::Halving,
            "subtract" => DecaySchedule::Subtract,
            other => {
                return Err(val_err(
                    "mint_decay",
                    format!("expected `halving` or `subtract`, got `{other}`"),
                ))
            }
        };
        let mint_period: u64 =
            parse_num(get("mint_period")?).map_err(|e| val_err("mint_period", e))?;
        let qmax: u64 = parse_num(get("qmax")?).map_err(|e| val_err("qmax", e))?;
        let m_min: u64 = parse_num(get("m_min")?).map_err(|e| val_err("m_min", e))?;
        let t_frac: f64 = parse_float(get("t_frac")?).map_err(|e| val_err("t_frac", e))?;
        let budget = Probability::parse_decimal(get("budget")?)
            .map_err(|e| val_err("budget", e.to_string()))?;
        let adversary_fraction: f64 = parse_float(get("adversary_fraction")?)
            .map_err(|e| val_err("adversary_fraction", e))?;
        let agents = AgentDistributions {
            demand: parse_int_dist(get("agents.demand")?)
                .map_err(|e| val_err("agents.demand", e))?,
            fear_line: parse_int_dist(get("agents.fear_line")?)
                .map_err(|e| val_err("agents.fear_line", e))?,
            balance: parse_int_dist(get("agents.balance")?)
                .map_err(|e| val_err("agents.balance", e))?,
            duty_reliability: parse_float_dist(get("agents.duty_reliability")?)
                .map_err(|e| val_err("agents.duty_reliability", e))?,
        };
        let shock = match (raw.get("shock.height"), raw.get("shock.demand_factor")) {
            (None, None) => None,
            (Some(h), Some(f)) => Some(DemandShock {
                height: parse_num(h).map_err(|e| val_err("shock.height", e))?,
                factor: parse_float(f).map_err(|e| val_err("shock.demand_factor", e))?,
            }),
            _ => {
                return Err(ConfigError::Invalid(
                    "shock.height and shock.demand_factor must be set together".into(),
                ))
            }
        };
        let oplog = match get("oplog")? {
            "true" => true,
            "false" => false,
            other => {
                return Err(val_err(
                    "oplog",
                    format!("expected true/false, got `{other}`"),
                ))
            }
        };

        if mint_period == 0 {
            return Err(ConfigError::Invalid("mint_period must be >= 1".into()));
        }
        if avgq_window == 0 {
            return Err(ConfigError::Invalid("avgq_window must be >= 1".into()));
        }
        if u_den.is_zero() {
            return Err(ConfigError::Invalid("u has zero denominator".into()));
        }
        if !(t_frac > 0.5 && t_frac <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "t_frac {t_frac} outside (0.5, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&adversary_fraction) {
            return Err(ConfigError::Invalid(format!(
                "adversary_fraction {adversary_fraction} outside [0, 1]"
            )));
        }
        if !(gpl_min <= gpl_initial && gpl_initial <= gpl_max) {
            return Err(ConfigError::Invalid(format!(
                "gpl bounds must satisfy min <= initial <= max (got {gpl_min} <= {gpl_initial} <= {gpl_max})"
            )));
        }
        if !(i_min <= i_initial && i_initial <= i_max) {
            return Err(ConfigError::Invalid(format!(
                "i bounds must satisfy min <= initial <= max (got {i_min} <= {i_initial} <= {i_max})"
            )));
        }
        if gpl_min == 0 {
            return Err(ConfigError::Invalid("gpl_min must be >= 1".into()));
        }
        if let IntDist::Uniform { lo, hi } = agents.demand {
            if lo > hi {
                return Err(ConfigError::Invalid("agents.demand range is empty".into()));
            }
        }
        if let IntDist::Uniform { lo, hi } = agents.fear_line {
            if lo > hi {
                return Err(ConfigError::Invalid(
                    "agents.fear_line range is empty".into(),
                ));
            }
        }
        if let IntDist::Uniform { lo, hi } = agents.balance {
            if lo > hi {
                return Err(ConfigError::Invalid("agents.balance range is empty".into()));
            }
        }
        match agents.duty_reliability {
            FloatDist::Constant(p) if !(0.0..=1.0).contains(&p) => {
                return Err(ConfigError::Invalid(format!(
                    "duty reliability {p} outside [0, 1]"
                )));
            }
            FloatDist::Uniform { lo, hi } if !(0.0 <= lo && lo <= hi && hi <= 1.0) => {
                return Err(ConfigError::Invalid(
                    "duty reliability range outside [0, 1]".into(),
                ));
            }
            _ => {}
        }
        if let Some(shock) = &shock {
            if !(shock.factor.is_finite() && shock.factor > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "shock.demand_factor {} must be positive",
                    shock.factor
                )));
            }
        }

        Ok(SimConfig {
            population,
            intervals,
            seed,
            b,
            u: Ratio::new(u_num, u_den),
            avgq_window,
            avq_initial,
            warmup,
            gpl_initial,
            i_initial,
            bounds: PolicyBounds {
                gpl_min,
                gpl_max,
                i_min,
                i_max,
            },
            fee,
            mint_initial,
            mint_decay,
            mint_period,
            qmax,
            m_min,
            t_frac,
            budget,
            adversary_fraction,
            agents,
            shock,
            oplog,
            raw,
        })
    }

    /// Resolved entries in canonical order, suitable for the manifest echo.
    pub fn canonical_entries(&self) -> Vec<(String, String)> {
        KEY_ORDER
            .iter()
            .filter_map(|k| self.raw.get(*k).map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

fn parse_num<T: std::str::FromStr>(text: &str) -> Result<T, String> {
    text.parse().map_err(|_| format!("bad integer `{text}`"))
}

fn parse_float(text: &str) -> Result<f64, String> {
    let v: f64 = text.parse().map_err(|_| format!("bad number `{text}`"))?;
    if !v.is_finite() {
        return Err(format!("non-finite number `{text}`"));
    }
    Ok(v)
}

fn parse_amount(text: &str) -> Result<Amount, String> {
    let (num, den) = decimal_to_ratio(text)?;
    if !den.is_one() {
        return Err(format!("`{text}` is not an integer amount of base units"));
    }
    Ok(Amount::from_biguint(num))
}

fn parse_call<'a>(text: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let rest = text.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn parse_int_dist(text: &str) -> Result<IntDist, String> {
    if let Some(args) = parse_call(text, "uniform") {
        let [lo, hi] = args[..] else {
            return Err(format!("uniform takes two arguments, got `{text}`"));
        };
        return Ok(IntDist::Uniform {
            lo: parse_num(lo)?,
            hi: parse_num(hi)?,
        });
    }
    Ok(IntDist::Constant(parse_num(text)?))
}

fn parse_float_dist(text: &str) -> Result<FloatDist, String> {
    if let Some(args) = parse_call(text, "uniform") {
        let [lo, hi] = args[..] else {
            return Err(format!("uniform takes two arguments, got `{text}`"));
        };
        return Ok(FloatDist::Uniform {
            lo: parse_float(lo)?,
            hi: parse_float(hi)?,
        });
    }
    Ok(FloatDist::Constant(parse_float(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        let (n, d) = decimal_to_ratio("0.013").unwrap();
        assert_eq!((n, d), (13u32.into(), 1000u32.into()));
        let (n, d) = decimal_to_ratio("1e-6").unwrap();
        assert_eq!((n, d), (1u32.into(), 1_000_000u32.into()));
        let (n, d) = decimal_to_ratio("2.5e3").unwrap();
        assert_eq!((n, d), (2500u32.into(), 1u32.into()));
        assert!(decimal_to_ratio("-1").is_err());
        assert!(decimal_to_ratio("abc").is_err());
    }

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = SimConfig::parse("population = 10\nintervals = 5\nseed = 1\n", None).unwrap();
        assert_eq!(cfg.population, 10);
        assert_eq!(cfg.b, 2.0);
        assert_eq!(cfg.bounds.gpl_max, 10000);
        assert_eq!(cfg.agents.demand, IntDist::Uniform { lo: 1, hi: 100 });
        assert!(cfg.shock.is_none());
    }

    #[test]
    fn seed_override_wins() {
        let cfg = SimConfig::parse("population = 1\nintervals = 1\nseed = 7\n", Some(99)).unwrap();
        assert_eq!(cfg.seed, 99);
        // And a missing seed is an error without an override.
        assert!(SimConfig::parse("population = 1\nintervals = 1\n", None).is_err());
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let text = "\n# header\npopulation = 3   # trailing\n\nintervals=2\nseed = 0\nagents.demand = uniform( 5 , 9 )\n";
        let cfg = SimConfig::parse(text, None).unwrap();
        assert_eq!(cfg.agents.demand, IntDist::Uniform { lo: 5, hi: 9 });
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(
            SimConfig::parse("populaton = 3\n", None),
            Err(ConfigError::Unknown(_))
        ));
        assert!(SimConfig::parse(
            "population = 1\nintervals = 1\nseed = 0\nt_frac = 0.4\n",
            None
        )
        .is_err());
        assert!(SimConfig::parse(
            "population = 1\nintervals = 1\nseed = 0\nshock.height = 5\n",
            None
        )
        .is_err());
    }

    #[test]
    fn canonical_entries_round_trip() {
        let text = "population = 4\nintervals = 9\nseed = 3\nu = 0.013\nagents.balance = uniform(10, 20)\n";
        let cfg = SimConfig::parse(text, None).unwrap();
        let echo: String = cfg
            .canonical_entries()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let cfg2 = SimConfig::parse(&echo, None).unwrap();
        assert_eq!(cfg2.canonical_entries(), cfg.canonical_entries());
    }
}
