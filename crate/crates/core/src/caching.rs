//! Cooperative caching game.
//!
//! A coalition of cells downloads the union of its members' demanded
//! contents once from the macro base station. The download bill is divided
//! by Shapley value; a content fetched by one member and consumed by another
//! additionally costs the consumer `size * c_share * hops`, where hops are
//! counted inside the coalition's induced subgraph.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::Rng;
use thiserror::Error;

use crate::coalition::{Coalition, Game};
use crate::rng::{derive_seed, fnv1a64, rng_from_seed};
use crate::shapley::{shapley_exact, shapley_montecarlo, Allocation, ShapleyError, TuGame, EXACT_MAX_PLAYERS};
use crate::topology::NetworkGraph;

/// Monte Carlo orderings used for coalitions too large for exact Shapley.
pub const MC_SAMPLES: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CachingError {
    #[error("content {0} has non-positive or non-finite size {1}")]
    BadSize(usize, f64),
    #[error("player {0} has an empty demand set")]
    EmptyDemand(usize),
    #[error("unknown content id {0}")]
    UnknownContent(usize),
    #[error("unknown player id {0}")]
    UnknownPlayer(usize),
    #[error("invalid caching parameter: {0}")]
    BadParam(String),
    #[error("demand profile covers {demands} players but the graph has {nodes} nodes")]
    PlayerMismatch { demands: usize, nodes: usize },
    #[error("cannot draw {wanted} distinct contents from a catalog of {available}")]
    DemandTooLarge { wanted: usize, available: usize },
    #[error(transparent)]
    Shapley(#[from] ShapleyError),
}

/// Content sizes in MB, indexed by content id.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    sizes: Vec<f64>,
}

impl ContentCatalog {
    pub fn new(sizes: Vec<f64>) -> Result<Self, CachingError> {
        if let Some((id, &s)) = sizes.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
            return Err(CachingError::BadSize(id, s));
        }
        Ok(ContentCatalog { sizes })
    }

    pub fn uniform(count: usize, size: f64) -> Result<Self, CachingError> {
        Self::new(vec![size; count])
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn size(&self, content: usize) -> Result<f64, CachingError> {
        self.sizes.get(content).copied().ok_or(CachingError::UnknownContent(content))
    }
}

/// Demanded content ids per player, each set sorted and nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    demands: Vec<Vec<usize>>,
}

impl DemandProfile {
    pub fn new(demands: Vec<Vec<usize>>, catalog: &ContentCatalog) -> Result<Self, CachingError> {
        let mut demands = demands;
        for (player, set) in demands.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(CachingError::EmptyDemand(player));
            }
            if let Some(&bad) = set.iter().find(|&&c| c >= catalog.len()) {
                return Err(CachingError::UnknownContent(bad));
            }
        }
        Ok(DemandProfile { demands })
    }

    pub fn n_players(&self) -> usize {
        self.demands.len()
    }

    pub fn of(&self, player: usize) -> Result<&[usize], CachingError> {
        self.demands.get(player).map(Vec::as_slice).ok_or(CachingError::UnknownPlayer(player))
    }

    fn wants(&self, player: usize, content: usize) -> bool {
        self.demands[player].binary_search(&content).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachingParams {
    /// Cost per MB fetched from the macro base station.
    pub c_bs: f64,
    /// Cost per MB per hop when a member forwards content to another.
    pub c_share: f64,
    /// Zipf exponent used by [`generate_demands`].
    pub popularity_skew: f64,
}

impl CachingParams {
    pub fn validate(&self) -> Result<(), CachingError> {
        if !(self.c_bs.is_finite() && self.c_bs > 0.0) {
            return Err(CachingError::BadParam(format!("c_bs must be > 0, got {}", self.c_bs)));
        }
        if !(self.c_share.is_finite() && self.c_share >= 0.0) {
            return Err(CachingError::BadParam(format!("c_share must be >= 0, got {}", self.c_share)));
        }
        if !(self.popularity_skew.is_finite() && self.popularity_skew >= 0.0) {
            return Err(CachingError::BadParam(format!("popularity_skew must be >= 0, got {}", self.popularity_skew)));
        }
        Ok(())
    }
}

impl Default for CachingParams {
    fn default() -> Self {
        CachingParams { c_bs: 1.0, c_share: 0.1, popularity_skew: 0.8 }
    }
}

fn union_contents(members: &[usize], demands: &DemandProfile) -> Result<Vec<usize>, CachingError> {
    let mut all = Vec::new();
    for &p in members {
        all.extend_from_slice(demands.of(p)?);
    }
    all.sort_unstable();
    all.dedup();
    Ok(all)
}

/// `c_bs` times the total size of the union of the members' demands.
pub fn coalition_download_cost(
    members: &[usize],
    demands: &DemandProfile,
    catalog: &ContentCatalog,
    params: &CachingParams,
) -> Result<f64, CachingError> {
    let mut total = 0.0;
    for c in union_contents(members, demands)? {
        total += catalog.size(c)?;
    }
    Ok(params.c_bs * total)
}

/// Shapley split of [`coalition_download_cost`]. Coalitions above
/// [`EXACT_MAX_PLAYERS`] use [`MC_SAMPLES`] orderings seeded by `mc_seed`.
pub fn download_shares(
    members: &[usize],
    demands: &DemandProfile,
    catalog: &ContentCatalog,
    params: &CachingParams,
    mc_seed: u64,
) -> Result<Allocation, CachingError> {
    // Validate ids once so the oracle below can't fail.
    coalition_download_cost(members, demands, catalog, params)?;
    let value = |s: &[usize]| coalition_download_cost(s, demands, catalog, params).expect("validated members");
    let game = TuGame::new(members.to_vec(), value)?;
    if members.len() <= EXACT_MAX_PLAYERS {
        Ok(shapley_exact(&game)?)
    } else {
        Ok(shapley_montecarlo(&game, MC_SAMPLES, mc_seed)?)
    }
}

/// Which member fetches each content in the coalition's union.
pub type DownloaderMap = BTreeMap<usize, usize>;

fn hop_table(members: &[usize], graph: &NetworkGraph) -> HashMap<(usize, usize), usize> {
    let mut table = HashMap::new();
    for &a in members {
        for &b in members {
            let hops = graph
                .hop_distance(a, b, members)
                .unwrap_or_else(|| panic!("members {a} and {b} are disconnected inside a feasible coalition"));
            table.insert((a, b), hops);
        }
    }
    table
}

/// Each union content goes to the requesting member with the least total
/// forwarding cost to the other requesters; ties go to the lowest id.
pub fn assign_downloaders(
    members: &[usize],
    graph: &NetworkGraph,
    demands: &DemandProfile,
    catalog: &ContentCatalog,
    params: &CachingParams,
) -> Result<DownloaderMap, CachingError> {
    let mut members = members.to_vec();
    members.sort_unstable();
    let hops = hop_table(&members, graph);
    let mut map = DownloaderMap::new();
    for content in union_contents(&members, demands)? {
        let size = catalog.size(content)?;
        let requesters: Vec<usize> = members.iter().copied().filter(|&p| demands.wants(p, content)).collect();
        let mut best: Option<(f64, usize)> = None;
        for &holder in &requesters {
            let cost: f64 =
                requesters.iter().filter(|&&r| r != holder).map(|&r| size * params.c_share * hops[&(holder, r)] as f64).sum();
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, holder));
            }
        }
        map.insert(content, best.expect("union content has a requester").1);
    }
    Ok(map)
}

/// What `player` pays to receive contents fetched by other members.
pub fn sharing_cost(
    player: usize,
    members: &[usize],
    graph: &NetworkGraph,
    demands: &DemandProfile,
    catalog: &ContentCatalog,
    params: &CachingParams,
    downloaders: &DownloaderMap,
) -> Result<f64, CachingError> {
    let mut total = 0.0;
    for &content in demands.of(player)? {
        let holder = *downloaders.get(&content).ok_or(CachingError::UnknownContent(content))?;
        if holder == player {
            continue;
        }
        let hops = graph
            .hop_distance(holder, player, members)
            .unwrap_or_else(|| panic!("holder {holder} cannot reach {player} inside the coalition"));
        total += catalog.size(content)? * params.c_share * hops as f64;
    }
    Ok(total)
}

/// The caching scenario as a hedonic game. Utility is the negated cost;
/// coalitions must induce a connected subgraph.
pub struct CachingGame {
    graph: NetworkGraph,
    demands: DemandProfile,
    catalog: ContentCatalog,
    params: CachingParams,
    mc_seed: u64,
    // Per-coalition member costs, in member order.
    memo: Mutex<HashMap<Coalition, Arc<Vec<f64>>>>,
}

pub fn build_caching_game(
    graph: NetworkGraph,
    demands: DemandProfile,
    catalog: ContentCatalog,
    params: CachingParams,
    mc_seed: u64,
) -> Result<CachingGame, CachingError> {
    params.validate()?;
    if demands.n_players() != graph.node_count() {
        return Err(CachingError::PlayerMismatch { demands: demands.n_players(), nodes: graph.node_count() });
    }
    Ok(CachingGame { graph, demands, catalog, params, mc_seed, memo: Mutex::new(HashMap::new()) })
}

impl CachingGame {
    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn demands(&self) -> &DemandProfile {
        &self.demands
    }

    pub fn params(&self) -> &CachingParams {
        &self.params
    }

    /// Cost of downloading alone: `c_bs` times the player's own demand size.
    pub fn standalone_cost(&self, player: usize) -> f64 {
        coalition_download_cost(&[player], &self.demands, &self.catalog, &self.params).expect("valid player")
    }

    /// Costs of every member of `coalition`, in member order.
    pub fn member_costs(&self, coalition: &Coalition) -> Arc<Vec<f64>> {
        if let Some(hit) = self.memo.lock().expect("memo lock").get(coalition) {
            return Arc::clone(hit);
        }
        let costs = Arc::new(self.compute_costs(coalition));
        self.memo.lock().expect("memo lock").insert(coalition.clone(), Arc::clone(&costs));
        costs
    }

    fn compute_costs(&self, coalition: &Coalition) -> Vec<f64> {
        let members = coalition.members();
        if members.len() == 1 {
            return vec![self.standalone_cost(members[0])];
        }
        let seed = derive_seed(self.mc_seed, fnv1a64(coalition.to_string().as_bytes()));
        let shares = download_shares(members, &self.demands, &self.catalog, &self.params, seed).expect("valid coalition");
        let downloaders =
            assign_downloaders(members, &self.graph, &self.demands, &self.catalog, &self.params).expect("valid coalition");
        members
            .iter()
            .map(|&p| {
                let share = shares.get(p).expect("member share");
                let sharing = sharing_cost(p, members, &self.graph, &self.demands, &self.catalog, &self.params, &downloaders)
                    .expect("valid coalition");
                share + sharing
            })
            .collect()
    }

    pub fn cost(&self, player: usize, coalition: &Coalition) -> f64 {
        let idx = coalition.members().binary_search(&player).expect("player in coalition");
        self.member_costs(coalition)[idx]
    }
}

impl Game for CachingGame {
    fn n_players(&self) -> usize {
        self.demands.n_players()
    }

    fn utility(&self, player: usize, coalition: &Coalition) -> f64 {
        -self.cost(player, coalition)
    }

    fn feasible(&self, coalition: &Coalition) -> bool {
        self.graph.coalition_feasible(coalition.members()).unwrap_or(false)
    }
}

/// Each player draws `per_player` distinct contents, content `k` weighted
/// by `(k + 1)^-skew` and sampled without replacement.
pub fn generate_demands(
    n_players: usize,
    catalog: &ContentCatalog,
    skew: f64,
    per_player: usize,
    seed: u64,
) -> Result<DemandProfile, CachingError> {
    if per_player > catalog.len() {
        return Err(CachingError::DemandTooLarge { wanted: per_player, available: catalog.len() });
    }
    if per_player == 0 && n_players > 0 {
        return Err(CachingError::EmptyDemand(0));
    }
    if !(skew.is_finite() && skew >= 0.0) {
        return Err(CachingError::BadParam(format!("zipf skew must be >= 0, got {skew}")));
    }
    let weights: Vec<f64> = (0..catalog.len()).map(|k| ((k + 1) as f64).powf(-skew)).collect();
    let mut rng = rng_from_seed(seed);
    let mut demands = Vec::with_capacity(n_players);
    for _ in 0..n_players {
        let mut remaining: Vec<usize> = (0..catalog.len()).collect();
        let mut picked = Vec::with_capacity(per_player);
        for _ in 0..per_player {
            let total: f64 = remaining.iter().map(|&c| weights[c]).sum();
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = remaining.len() - 1;
            for (pos, &c) in remaining.iter().enumerate() {
                if target < weights[c] {
                    chosen = pos;
                    break;
                }
                target -= weights[c];
            }
            picked.push(remaining.remove(chosen));
        }
        demands.push(picked);
    }
    DemandProfile::new(demands, catalog)
}
