//! Experiment orchestration: config parsing, seeded cell execution, CSV or
//! JSON-lines output, oracle verification and one-key sweeps.
//!
//! Each configured seed is the root of one cell; every random stream inside
//! a cell comes from `derive_seed(root, k)` with a fixed `k` per purpose, so
//! results do not depend on scheduling.

mod config;
mod table;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::Value;
use thiserror::Error;

pub use config::{AuctionConfig, CachingConfig, CachingOrder, ExperimentConfig, LcgConfig, OneOrMany};
pub use table::{write_atomic, Cell, OutputFormat, Table};

use crate::auction::{run_auction_cell, AuctionError, AuctionParams};
use crate::caching::{build_caching_game, generate_demands, CachingError, CachingGame, CachingParams, ContentCatalog};
use crate::coalition::{
    enumerate_stable_partitions, find_improving_move, potential, run_until_stable, EngineError, Move, Partition, Preference,
    PreferenceOrder,
};
use crate::lcg::{best_response_dynamics, collision_free, potential as lcg_potential};
use crate::rng::derive_seed;
use crate::topology::{Area, NetworkGraph, NodeKind, TopologyError};
use config::KeyKind;

/// Largest caching instance `verify` will enumerate.
pub const VERIFY_MAX_PLAYERS: usize = 7;

pub const CACHING_COLUMNS: &[&str] =
    &["seed", "order", "n_players", "mean_cost", "total_cost", "n_coalitions", "max_coalition_size", "iterations", "status"];
pub const AUCTION_COLUMNS: &[&str] = &["algorithm", "n_buyers", "seed", "selling_ratio", "satisfaction", "revenue"];
pub const LCG_COLUMNS: &[&str] = &["seed", "K", "iterations", "final_potential", "collision_free"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Caching(#[from] CachingError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    /// Whether the error is the user's input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Json(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
    /// Adds a `wall_ms` column; output is then no longer reproducible.
    pub timing: bool,
    pub format: OutputFormat,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, timing: false, format: OutputFormat::Csv }
    }
}

pub fn read_config_value(path: &Path) -> Result<Value, HarnessError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("config {} is not valid JSON: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    ExperimentConfig::from_value(read_config_value(path)?)
}

type Rows = Vec<Vec<Cell>>;

fn run_cells<C, F>(cells: &[C], jobs: usize, timing: bool, f: F) -> Result<Rows, HarnessError>
where
    C: Sync,
    F: Fn(&C) -> Result<Rows, HarnessError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    let per_cell: Vec<Rows> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let start = Instant::now();
                let mut rows = f(cell)?;
                if timing {
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    for row in &mut rows {
                        row.push(ms.into());
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_, HarnessError>>()
    })?;
    Ok(per_cell.into_iter().flatten().collect())
}

fn table_with(columns: &[&str], timing: bool, rows: Rows) -> Table {
    let mut cols = columns.to_vec();
    if timing {
        cols.push("wall_ms");
    }
    let mut table = Table::new(&cols);
    for row in rows {
        table.push(row);
    }
    table
}

fn area_of(a: [f64; 2]) -> Result<Area, HarnessError> {
    Ok(Area::new(a[0], a[1])?)
}

/// The caching game a config describes for one root seed.
pub fn caching_instance(cfg: &CachingConfig, seed: u64) -> Result<CachingGame, HarnessError> {
    let graph =
        NetworkGraph::generate_uniform(cfg.n_players, area_of(cfg.area)?, cfg.radius, NodeKind::SmallCell, derive_seed(seed, 0))?;
    let catalog = ContentCatalog::uniform(cfg.catalog_size, cfg.content_size_mb)?;
    let demands = generate_demands(cfg.n_players, &catalog, cfg.zipf_skew, cfg.demand_per_player, derive_seed(seed, 1))?;
    let params = CachingParams { c_bs: cfg.c_bs, c_share: cfg.c_share, popularity_skew: cfg.zipf_skew };
    Ok(build_caching_game(graph, demands, catalog, params, derive_seed(seed, 2))?)
}

/// Engine seed for a caching cell, shared by every order so they see the same stream.
pub fn caching_engine_seed(seed: u64) -> u64 {
    derive_seed(seed, 3)
}

fn caching_cell(cfg: &CachingConfig, seed: u64) -> Result<Rows, HarnessError> {
    let game = caching_instance(cfg, seed)?;
    let n = cfg.n_players;
    let mut rows = Vec::new();
    for order in cfg.orders() {
        let (partition, iterations, status) = match order.preference() {
            None => (Partition::singletons(n), 0, "baseline".to_string()),
            Some(pref) => {
                let (p, trace) =
                    run_until_stable(&game, game.graph(), &pref, cfg.dynamics, caching_engine_seed(seed), cfg.max_iters);
                (p, trace.iterations(), trace.status.to_string())
            }
        };
        let total = -potential(&game, &partition);
        let mean = if n == 0 { 0.0 } else { total / n as f64 };
        rows.push(vec![
            seed.into(),
            order.as_str().into(),
            n.into(),
            mean.into(),
            total.into(),
            partition.len().into(),
            partition.max_coalition_size().into(),
            iterations.into(),
            status.into(),
        ]);
    }
    log::debug!("caching seed {seed} done");
    Ok(rows)
}

pub fn auction_params(cfg: &AuctionConfig) -> Result<AuctionParams, HarnessError> {
    Ok(AuctionParams {
        n_channels: cfg.n_channels,
        ask_range: (cfg.ask_range[0], cfg.ask_range[1]),
        valuation_range: (cfg.valuation_range[0], cfg.valuation_range[1]),
        demand_max: cfg.demand_max,
        interference_radius: cfg.interference_radius,
        area: area_of(cfg.area)?,
        max_iters: cfg.max_iters,
    })
}

fn auction_cell(params: &AuctionParams, n_buyers: usize, seed: u64) -> Result<Rows, HarnessError> {
    let rows = run_auction_cell(params, n_buyers, seed)?;
    log::debug!("auction n={n_buyers} seed {seed} done");
    Ok(rows
        .into_iter()
        .map(|r| {
            vec![
                r.algorithm.as_str().into(),
                r.n_buyers.into(),
                r.seed.into(),
                r.selling_ratio.into(),
                r.satisfaction.into(),
                r.revenue.into(),
            ]
        })
        .collect())
}

fn lcg_cell(cfg: &LcgConfig, channels: usize, seed: u64) -> Result<Rows, HarnessError> {
    let graph =
        NetworkGraph::generate_uniform(cfg.n_players, area_of(cfg.area)?, cfg.radius, NodeKind::User, derive_seed(seed, 0))?;
    let (state, trace) = best_response_dynamics(&graph, channels, derive_seed(seed, 1), cfg.max_iters);
    Ok(vec![vec![
        seed.into(),
        channels.into(),
        trace.moves.len().into(),
        lcg_potential(&state, &graph).into(),
        collision_free(&state, &graph).into(),
    ]])
}

/// Executes every cell of `config` and returns the rows in cell order.
pub fn run_config(config: &ExperimentConfig, opts: &RunOptions) -> Result<Table, HarnessError> {
    let seeds = config.seeds();
    let started = Instant::now();
    let table = match config {
        ExperimentConfig::Caching(cfg) => {
            let rows = run_cells(&seeds, opts.jobs, opts.timing, |&seed| caching_cell(cfg, seed))?;
            table_with(CACHING_COLUMNS, opts.timing, rows)
        }
        ExperimentConfig::Auction(cfg) => {
            let params = auction_params(cfg)?;
            let cells: Vec<(usize, u64)> = cfg.buyer_counts.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
            let rows = run_cells(&cells, opts.jobs, opts.timing, |&(n, seed)| auction_cell(&params, n, seed))?;
            table_with(AUCTION_COLUMNS, opts.timing, rows)
        }
        ExperimentConfig::Lcg(cfg) => {
            let cells: Vec<(usize, u64)> =
                cfg.channels.to_vec().into_iter().flat_map(|k| seeds.iter().map(move |&s| (k, s))).collect();
            let rows = run_cells(&cells, opts.jobs, opts.timing, |&(k, seed)| lcg_cell(cfg, k, seed))?;
            table_with(LCG_COLUMNS, opts.timing, rows)
        }
    };
    log::info!("{} run: {} rows in {:.2?}", config.scenario(), table.rows.len(), started.elapsed());
    Ok(table)
}

/// Runs `config` and writes the result atomically to `out`.
pub fn run_to_file(config: &ExperimentConfig, opts: &RunOptions, out: &Path) -> Result<Table, HarnessError> {
    let table = run_config(config, opts)?;
    write_atomic(out, &table.render(opts.format)?)?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyFailure {
    pub seed: u64,
    pub order: PreferenceOrder,
    pub partition: String,
    /// A move the order approves from the engine's final partition.
    pub witness: Option<Move>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub runs: usize,
    pub stable_runs: usize,
    pub failures: Vec<VerifyFailure>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every stable engine run against the brute-force oracle.
pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport, HarnessError> {
    verify_with(config, |order| order)
}

/// [`verify`] with the engine driven by `engine_pref(order)` while the
/// oracle keeps the true order.
pub fn verify_with<P, F>(config: &ExperimentConfig, engine_pref: F) -> Result<VerifyReport, HarnessError>
where
    P: Preference,
    F: Fn(PreferenceOrder) -> P,
{
    let ExperimentConfig::Caching(cfg) = config else {
        return Err(HarnessError::Config(format!("verify supports caching configs only, got {}", config.scenario())));
    };
    if cfg.n_players > VERIFY_MAX_PLAYERS {
        return Err(HarnessError::Config(format!(
            "key `n_players`: verify enumerates all partitions and accepts at most {VERIFY_MAX_PLAYERS} players, got {}",
            cfg.n_players
        )));
    }
    let mut report = VerifyReport::default();
    for seed in config.seeds() {
        let game = caching_instance(cfg, seed)?;
        for order in cfg.orders().iter().filter_map(CachingOrder::preference) {
            let oracle = enumerate_stable_partitions(&game, game.graph(), &order)?;
            let pref = engine_pref(order);
            let (partition, trace) =
                run_until_stable(&game, game.graph(), &pref, cfg.dynamics, caching_engine_seed(seed), cfg.max_iters);
            report.runs += 1;
            if trace.status != crate::coalition::TerminalStatus::Stable {
                continue;
            }
            report.stable_runs += 1;
            if !oracle.stable.contains(&partition) {
                let witness = find_improving_move(&game, game.graph(), &partition, &order);
                report.failures.push(VerifyFailure { seed, order, partition: partition.canonical_string(), witness });
            }
        }
    }
    Ok(report)
}

fn numeric_value(key: &str, raw: &str) -> Result<Value, HarnessError> {
    let raw = raw.trim();
    if let Ok(i) = raw.parse::<u64>() {
        return Ok(i.into());
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Ok(i.into());
    }
    raw.parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map(Value::Number)
        .ok_or_else(|| HarnessError::Config(format!("key `{key}` is numeric but sweep value `{raw}` is not a number")))
}

fn sweep_json(kind: KeyKind, key: &str, raw: &str) -> Result<Value, HarnessError> {
    match kind {
        KeyKind::Number => numeric_value(key, raw),
        KeyKind::Text => Ok(Value::String(raw.trim().to_string())),
        KeyKind::NumberList => Ok(Value::Array(vec![numeric_value(key, raw)?])),
        KeyKind::Pair => match raw.split_once(':') {
            Some((lo, hi)) => Ok(Value::Array(vec![numeric_value(key, lo)?, numeric_value(key, hi)?])),
            None => {
                let v = numeric_value(key, raw)?;
                Ok(Value::Array(vec![v.clone(), v]))
            }
        },
    }
}

fn sweep_cell(v: &Value, raw: &str) -> Cell {
    match v {
        Value::Number(n) if n.is_u64() => Cell::Int(n.as_u64().unwrap_or_default()),
        Value::Number(n) => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
        _ => Cell::Text(raw.trim().to_string()),
    }
}

/// One run per value of `key`, concatenated under a leading `sweep_value`
/// column. Every value is validated before anything runs.
pub fn sweep(base: &Value, key: &str, values: &[String], opts: &RunOptions) -> Result<Table, HarnessError> {
    let scenario = base.get("scenario").and_then(Value::as_str).unwrap_or_default().to_string();
    // Validates the base config first so its own errors surface unchanged.
    ExperimentConfig::from_value(base.clone())?;
    let key = match (scenario.as_str(), key) {
        ("auction", "n_buyers") => "buyer_counts",
        (_, k) => k,
    };
    let kind = config::key_kind(&scenario, key)
        .ok_or_else(|| HarnessError::Config(format!("key `{key}` is not a sweepable {scenario} key")))?;
    if values.is_empty() {
        return Err(HarnessError::Config(format!("sweep over `{key}` needs at least one value")));
    }
    let mut configs = Vec::with_capacity(values.len());
    for raw in values {
        let value = sweep_json(kind, key, raw)?;
        let mut doc = base.clone();
        let map = doc.as_object_mut().expect("validated config is an object");
        match key {
            "seed" => drop(map.remove("seeds")),
            "seeds" => drop(map.remove("seed")),
            _ => {}
        }
        map.insert(key.to_string(), value.clone());
        let cfg = ExperimentConfig::from_value(doc)
            .map_err(|e| HarnessError::Config(format!("sweep value `{raw}` for key `{key}`: {e}")))?;
        let cell = match kind {
            KeyKind::NumberList => sweep_cell(&value[0], raw),
            _ => sweep_cell(&value, raw),
        };
        configs.push((cell, cfg));
    }
    let mut columns: Vec<String> = vec!["sweep_value".into()];
    let mut rows = Vec::new();
    for (k, (cell, cfg)) in configs.iter().enumerate() {
        let table = run_config(cfg, opts)?;
        if k == 0 {
            columns.extend(table.columns.iter().cloned());
        }
        for row in table.rows {
            let mut r = vec![cell.clone()];
            r.extend(row);
            rows.push(r);
        }
    }
    Ok(Table { columns, rows })
}
