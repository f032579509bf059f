use std::fmt;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use super::HarnessError;
use crate::coalition::{Dynamics, PreferenceOrder};

/// One value or a list of them.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// A caching order: one of the three preference orders, or the
/// non-grouping baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CachingOrder {
    Pareto,
    Coalition,
    Selfish,
    None,
}

impl CachingOrder {
    pub fn preference(&self) -> Option<PreferenceOrder> {
        match self {
            CachingOrder::Pareto => Some(PreferenceOrder::Pareto),
            CachingOrder::Coalition => Some(PreferenceOrder::Coalition),
            CachingOrder::Selfish => Some(PreferenceOrder::Selfish),
            CachingOrder::None => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CachingOrder::Pareto => "pareto",
            CachingOrder::Coalition => "coalition",
            CachingOrder::Selfish => "selfish",
            CachingOrder::None => "none",
        }
    }
}

impl fmt::Display for CachingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CachingConfig {
    pub n_players: usize,
    pub area: [f64; 2],
    pub radius: f64,
    pub catalog_size: usize,
    pub content_size_mb: f64,
    pub demand_per_player: usize,
    pub zipf_skew: f64,
    pub c_bs: f64,
    pub c_share: f64,
    pub order: OneOrMany<CachingOrder>,
    pub dynamics: Dynamics,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub max_iters: usize,
    #[serde(default)]
    pub output: Option<String>,
}

impl CachingConfig {
    pub fn orders(&self) -> Vec<CachingOrder> {
        self.order.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    pub n_channels: usize,
    pub ask_range: [f64; 2],
    pub valuation_range: [f64; 2],
    pub demand_max: usize,
    pub buyer_counts: Vec<usize>,
    pub interference_radius: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub max_iters: usize,
    #[serde(default = "default_area")]
    pub area: [f64; 2],
    #[serde(default)]
    pub output: Option<String>,
}

fn default_area() -> [f64; 2] {
    [100.0, 100.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcgConfig {
    pub n_players: usize,
    pub area: [f64; 2],
    pub radius: f64,
    pub channels: OneOrMany<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub max_iters: usize,
    #[serde(default)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentConfig {
    Caching(CachingConfig),
    Auction(AuctionConfig),
    Lcg(LcgConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum KeyKind {
    Number,
    Text,
    NumberList,
    Pair,
}

const CACHING_KEYS: &[(&str, KeyKind)] = &[
    ("n_players", KeyKind::Number),
    ("area", KeyKind::Pair),
    ("radius", KeyKind::Number),
    ("catalog_size", KeyKind::Number),
    ("content_size_mb", KeyKind::Number),
    ("demand_per_player", KeyKind::Number),
    ("zipf_skew", KeyKind::Number),
    ("c_bs", KeyKind::Number),
    ("c_share", KeyKind::Number),
    ("order", KeyKind::Text),
    ("dynamics", KeyKind::Text),
    ("seed", KeyKind::Number),
    ("seeds", KeyKind::NumberList),
    ("max_iters", KeyKind::Number),
];

const AUCTION_KEYS: &[(&str, KeyKind)] = &[
    ("n_channels", KeyKind::Number),
    ("ask_range", KeyKind::Pair),
    ("valuation_range", KeyKind::Pair),
    ("demand_max", KeyKind::Number),
    ("buyer_counts", KeyKind::NumberList),
    ("interference_radius", KeyKind::Number),
    ("seed", KeyKind::Number),
    ("seeds", KeyKind::NumberList),
    ("max_iters", KeyKind::Number),
    ("area", KeyKind::Pair),
];

const LCG_KEYS: &[(&str, KeyKind)] = &[
    ("n_players", KeyKind::Number),
    ("area", KeyKind::Pair),
    ("radius", KeyKind::Number),
    ("channels", KeyKind::NumberList),
    ("seed", KeyKind::Number),
    ("seeds", KeyKind::NumberList),
    ("max_iters", KeyKind::Number),
];

/// Sweepable keys of a scenario and how a scalar value maps onto them.
pub(crate) fn key_kind(scenario: &str, key: &str) -> Option<KeyKind> {
    let table = match scenario {
        "caching" => CACHING_KEYS,
        "auction" => AUCTION_KEYS,
        "lcg" => LCG_KEYS,
        _ => return None,
    };
    table.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

fn parse_section<T: DeserializeOwned>(scenario: &str, body: Value) -> Result<T, HarnessError> {
    serde_path_to_error::deserialize(body).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            HarnessError::Config(format!("{scenario} config: {inner}"))
        } else {
            HarnessError::Config(format!("{scenario} config key `{path}`: {inner}"))
        }
    })
}

fn check(ok: bool, key: &str, msg: &str) -> Result<(), HarnessError> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("key `{key}`: {msg}")))
    }
}

fn check_area(area: [f64; 2]) -> Result<(), HarnessError> {
    check(area.iter().all(|x| x.is_finite() && *x > 0.0), "area", "width and height must be positive")
}

fn check_seeds(seed: &Option<u64>, seeds: &Option<Vec<u64>>) -> Result<(), HarnessError> {
    match (seed, seeds) {
        (Some(_), Some(_)) => Err(HarnessError::Config("give either `seed` or `seeds`, not both".into())),
        (None, None) => Err(HarnessError::Config("missing key `seeds` (or a single `seed`)".into())),
        _ => Ok(()),
    }
}

fn seed_list(seed: &Option<u64>, seeds: &Option<Vec<u64>>) -> Vec<u64> {
    match (seed, seeds) {
        (_, Some(list)) => list.clone(),
        (Some(s), None) => vec![*s],
        (None, None) => Vec::new(),
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, HarnessError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config is not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    /// Dispatches on the `scenario` key, then validates the remaining keys.
    pub fn from_value(value: Value) -> Result<Self, HarnessError> {
        let Value::Object(mut map) = value else {
            return Err(HarnessError::Config("config must be a JSON object".into()));
        };
        let scenario = match map.remove("scenario") {
            Some(Value::String(s)) => s,
            Some(other) => return Err(HarnessError::Config(format!("key `scenario`: expected a string, got {other}"))),
            None => return Err(HarnessError::Config("missing key `scenario`".into())),
        };
        let body = Value::Object(map);
        let config = match scenario.as_str() {
            "caching" => ExperimentConfig::Caching(parse_section("caching", body)?),
            "auction" => ExperimentConfig::Auction(parse_section("auction", body)?),
            "lcg" => ExperimentConfig::Lcg(parse_section("lcg", body)?),
            other => {
                return Err(HarnessError::Config(format!(
                    "key `scenario`: unknown scenario `{other}`, expected caching, auction or lcg"
                )))
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn scenario(&self) -> &'static str {
        match self {
            ExperimentConfig::Caching(_) => "caching",
            ExperimentConfig::Auction(_) => "auction",
            ExperimentConfig::Lcg(_) => "lcg",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            ExperimentConfig::Caching(c) => seed_list(&c.seed, &c.seeds),
            ExperimentConfig::Auction(c) => seed_list(&c.seed, &c.seeds),
            ExperimentConfig::Lcg(c) => seed_list(&c.seed, &c.seeds),
        }
    }

    pub fn output(&self) -> Option<&str> {
        match self {
            ExperimentConfig::Caching(c) => c.output.as_deref(),
            ExperimentConfig::Auction(c) => c.output.as_deref(),
            ExperimentConfig::Lcg(c) => c.output.as_deref(),
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        match self {
            ExperimentConfig::Caching(c) => {
                check_seeds(&c.seed, &c.seeds)?;
                check_area(c.area)?;
                check(c.radius.is_finite() && c.radius >= 0.0, "radius", "must be non-negative")?;
                check(c.catalog_size >= 1, "catalog_size", "must be at least 1")?;
                check(c.content_size_mb.is_finite() && c.content_size_mb > 0.0, "content_size_mb", "must be positive")?;
                check(c.demand_per_player >= 1, "demand_per_player", "must be at least 1")?;
                check(c.demand_per_player <= c.catalog_size, "demand_per_player", "exceeds catalog_size")?;
                check(c.zipf_skew.is_finite() && c.zipf_skew >= 0.0, "zipf_skew", "must be non-negative")?;
                check(c.c_bs.is_finite() && c.c_bs > 0.0, "c_bs", "must be positive")?;
                check(c.c_share.is_finite() && c.c_share >= 0.0, "c_share", "must be non-negative")?;
                check(!c.orders().is_empty(), "order", "needs at least one order")?;
                check(c.max_iters >= 1, "max_iters", "must be at least 1")
            }
            ExperimentConfig::Auction(c) => {
                check_seeds(&c.seed, &c.seeds)?;
                check_area(c.area)?;
                for (key, [lo, hi]) in [("ask_range", c.ask_range), ("valuation_range", c.valuation_range)] {
                    check(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi, key, "needs 0 <= lo <= hi")?;
                }
                check(c.demand_max >= 1, "demand_max", "must be at least 1")?;
                check(
                    c.interference_radius.is_finite() && c.interference_radius >= 0.0,
                    "interference_radius",
                    "must be non-negative",
                )?;
                check(c.max_iters >= 1, "max_iters", "must be at least 1")
            }
            ExperimentConfig::Lcg(c) => {
                check_seeds(&c.seed, &c.seeds)?;
                check_area(c.area)?;
                check(c.radius.is_finite() && c.radius >= 0.0, "radius", "must be non-negative")?;
                check(c.channels.to_vec().iter().all(|&k| k >= 1), "channels", "every channel count must be at least 1")?;
                check(!c.channels.to_vec().is_empty(), "channels", "needs at least one channel count")?;
                check(c.max_iters >= 1, "max_iters", "must be at least 1")
            }
        }
    }
}
