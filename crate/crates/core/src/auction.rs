//! Spectrum group buying: buyers form conflict-free groups per channel and
//! the groups meet the sellers' asks in a double auction.
//!
//! A buyer may sit in several channel groups (up to its demand), so the
//! groups overlap across channels. Within one channel, group formation runs
//! the coalition engine with switch dynamics; a member's utility is its
//! share of the group surplus when the group's pooled bid meets the ask.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::coalition::{run_until_stable, Coalition, Dynamics, Game, Preference, PreferenceOrder};
use crate::rng::{derive_seed, rng_from_seed};
use crate::topology::{AdjacencyList, Area, Neighborhood, NetworkGraph, NodeKind, TopologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("buyers {0} and {1} conflict and cannot share channel {2}")]
    Conflict(usize, usize, usize),
    #[error("buyer {buyer} is grouped on {count} channels but demands only {demand}")]
    OverDemand { buyer: usize, count: usize, demand: usize },
    #[error("unknown channel {0}")]
    UnknownChannel(usize),
    #[error("unknown buyer {0}")]
    UnknownBuyer(usize),
    #[error("invalid auction instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub id: usize,
    pub ask: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Buyer {
    pub id: usize,
    /// Valuation per channel, indexed by channel id.
    pub valuations: Vec<f64>,
    /// Number of distinct channels wanted.
    pub demand: usize,
}

/// Channels, buyers and the symmetric buyer conflict relation.
#[derive(Debug, Clone)]
pub struct AuctionInstance {
    channels: Vec<Channel>,
    buyers: Vec<Buyer>,
    conflict: AdjacencyList,
}

impl AuctionInstance {
    pub fn new(channels: Vec<Channel>, buyers: Vec<Buyer>, conflict: AdjacencyList) -> Result<Self, AuctionError> {
        for (k, c) in channels.iter().enumerate() {
            if c.id != k {
                return Err(AuctionError::Invalid(format!("channel ids must be dense, found {} at {k}", c.id)));
            }
            if !(c.ask.is_finite() && c.ask >= 0.0) {
                return Err(AuctionError::Invalid(format!("channel {k} has ask {}", c.ask)));
            }
        }
        if conflict.len() != buyers.len() {
            return Err(AuctionError::Invalid("conflict relation size differs from buyer count".into()));
        }
        for (k, b) in buyers.iter().enumerate() {
            if b.id != k {
                return Err(AuctionError::Invalid(format!("buyer ids must be dense, found {} at {k}", b.id)));
            }
            if b.valuations.len() != channels.len() || b.valuations.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(AuctionError::Invalid(format!("buyer {k} needs one finite non-negative valuation per channel")));
            }
            if b.demand == 0 || (b.demand > channels.len() && !channels.is_empty()) {
                return Err(AuctionError::Invalid(format!("buyer {k} demand {} outside 1..={}", b.demand, channels.len())));
            }
        }
        Ok(AuctionInstance { channels, buyers, conflict })
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn conflicts(&self, a: usize, b: usize) -> bool {
        self.conflict.adjacent(a, b)
    }

    fn conflict_free(&self, group: &[usize]) -> Option<(usize, usize)> {
        for (k, &a) in group.iter().enumerate() {
            for &b in &group[k + 1..] {
                if self.conflicts(a, b) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    /// Channel ids sorted by ask, then id.
    fn channels_by_ask(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.channels.len()).collect();
        order.sort_by(|&a, &b| self.channels[a].ask.total_cmp(&self.channels[b].ask).then(a.cmp(&b)));
        order
    }
}

/// Winning group per channel. A buyer may appear under several channels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuyerGrouping(BTreeMap<usize, Vec<usize>>);

impl BuyerGrouping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, channel: usize, mut group: Vec<usize>) {
        group.sort_unstable();
        group.dedup();
        self.0.insert(channel, group);
    }

    pub fn group(&self, channel: usize) -> Option<&[usize]> {
        self.0.get(&channel).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.0.iter().map(|(&c, g)| (c, g.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Channels each buyer is grouped on.
    pub fn memberships(&self, n_buyers: usize) -> Vec<usize> {
        let mut count = vec![0; n_buyers];
        for g in self.0.values() {
            for &b in g {
                count[b] += 1;
            }
        }
        count
    }

    pub fn validate(&self, instance: &AuctionInstance) -> Result<(), AuctionError> {
        for (&c, g) in &self.0 {
            if c >= instance.channels.len() {
                return Err(AuctionError::UnknownChannel(c));
            }
            if let Some(&b) = g.iter().find(|&&b| b >= instance.buyers.len()) {
                return Err(AuctionError::UnknownBuyer(b));
            }
            if let Some((a, b)) = instance.conflict_free(g) {
                return Err(AuctionError::Conflict(a, b, c));
            }
        }
        for (buyer, count) in self.memberships(instance.buyers.len()).into_iter().enumerate() {
            let demand = instance.buyers[buyer].demand;
            if count > demand {
                return Err(AuctionError::OverDemand { buyer, count, demand });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trade {
    pub channel: usize,
    pub group: Vec<usize>,
    pub bid: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub trades: Vec<Trade>,
    /// Sold channels over offered channels (0 when nothing is offered).
    pub selling_ratio: f64,
    /// Mean over buyers of channels won divided by demand.
    pub satisfaction: f64,
    /// Sum of clearing prices.
    pub revenue: f64,
}

/// Pooled bid of a conflict-free group: the sum of member valuations.
pub fn group_bid(instance: &AuctionInstance, group: &[usize], channel: usize) -> Result<f64, AuctionError> {
    if channel >= instance.channels.len() {
        return Err(AuctionError::UnknownChannel(channel));
    }
    if let Some(&b) = group.iter().find(|&&b| b >= instance.buyers.len()) {
        return Err(AuctionError::UnknownBuyer(b));
    }
    if let Some((a, b)) = instance.conflict_free(group) {
        return Err(AuctionError::Conflict(a, b, channel));
    }
    Ok(group.iter().map(|&b| instance.buyers[b].valuations[channel]).sum())
}

fn midpoint(ask: f64, bid: f64) -> f64 {
    (ask + bid) / 2.0
}

/// Clears channels in ascending ask order. A channel trades with its group
/// when the group is nonempty and its pooled bid covers the ask; the price
/// is the midpoint of ask and bid.
pub fn double_auction_clear(grouping: &BuyerGrouping, instance: &AuctionInstance) -> Result<AuctionOutcome, AuctionError> {
    grouping.validate(instance)?;
    let mut trades = Vec::new();
    let mut won = vec![0usize; instance.buyers.len()];
    for c in instance.channels_by_ask() {
        let Some(group) = grouping.group(c) else { continue };
        if group.is_empty() {
            continue;
        }
        let ask = instance.channels[c].ask;
        let bid = group_bid(instance, group, c)?;
        if bid >= ask {
            for &b in group {
                won[b] += 1;
            }
            trades.push(Trade { channel: c, group: group.to_vec(), bid, price: midpoint(ask, bid) });
        }
    }
    let selling_ratio = if instance.channels.is_empty() { 0.0 } else { trades.len() as f64 / instance.channels.len() as f64 };
    let satisfaction = if instance.buyers.is_empty() {
        0.0
    } else {
        instance.buyers.iter().zip(&won).map(|(b, &w)| w as f64 / b.demand as f64).sum::<f64>() / instance.buyers.len() as f64
    };
    let revenue = trades.iter().map(|t| t.price).sum();
    Ok(AuctionOutcome { trades, selling_ratio, satisfaction, revenue })
}

/// Group formation game for one channel over a subset of buyers.
///
/// A member's utility is its valuation-proportional share of the group
/// surplus at the midpoint price: `v (B - ask) / (2 B)` for pooled bid `B`.
/// It is negative while the group cannot cover the ask, so pooling always
/// helps the members of an unaffordable group.
pub struct ChannelGame<'a> {
    instance: &'a AuctionInstance,
    channel: usize,
    /// Local player index to buyer id.
    participants: Vec<usize>,
}

impl<'a> ChannelGame<'a> {
    pub fn new(instance: &'a AuctionInstance, channel: usize, participants: Vec<usize>) -> Self {
        ChannelGame { instance, channel, participants }
    }

    pub fn buyer(&self, local: usize) -> usize {
        self.participants[local]
    }

    fn value(&self, local: usize) -> f64 {
        self.instance.buyers[self.participants[local]].valuations[self.channel]
    }

    pub fn bid(&self, coalition: &Coalition) -> f64 {
        coalition.members().iter().map(|&p| self.value(p)).sum()
    }

    /// Cooperation graph: every non-conflicting pair of participants.
    pub fn cooperation_graph(&self) -> AdjacencyList {
        AdjacencyList::from_fn(self.participants.len(), |a, b| {
            !self.instance.conflicts(self.participants[a], self.participants[b])
        })
    }
}

impl Game for ChannelGame<'_> {
    fn n_players(&self) -> usize {
        self.participants.len()
    }

    fn utility(&self, player: usize, coalition: &Coalition) -> f64 {
        let bid = self.bid(coalition);
        if bid <= 0.0 {
            return 0.0;
        }
        let ask = self.instance.channels[self.channel].ask;
        self.value(player) * (bid - ask) / (2.0 * bid)
    }

    fn feasible(&self, coalition: &Coalition) -> bool {
        let buyers: Vec<usize> = coalition.members().iter().map(|&p| self.participants[p]).collect();
        self.instance.conflict_free(&buyers).is_none()
    }
}

/// Drops the smallest contributors while the rest still covers `ask`.
pub fn trim_to_minimal_winning(group: &[usize], valuation: impl Fn(usize) -> f64, ask: f64) -> Vec<usize> {
    let mut sorted: Vec<usize> = group.to_vec();
    sorted.sort_by(|&a, &b| valuation(a).total_cmp(&valuation(b)).then(a.cmp(&b)));
    let mut bid: f64 = sorted.iter().map(|&b| valuation(b)).sum();
    let mut keep = Vec::new();
    for (k, &b) in sorted.iter().enumerate() {
        if keep.is_empty() && k + 1 < sorted.len() && bid - valuation(b) >= ask {
            bid -= valuation(b);
        } else {
            keep.push(b);
        }
    }
    keep.sort_unstable();
    keep
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupingRun {
    pub grouping: BuyerGrouping,
    pub rounds: usize,
    pub converged: bool,
}

/// Iterative group formation.
///
/// Each round visits the channels without a group in ascending ask order.
/// Every buyer with a free demand slot plays the channel game under switch
/// dynamics from singletons. Among the resulting coalitions whose pooled bid
/// covers the ask, the one with the lowest bid is trimmed to a minimal
/// winning subset and becomes the channel's group. Groups are kept once
/// formed. Rounds repeat until a round adds no group, or `max_iters` rounds
/// have run.
pub fn form_buyer_groups(instance: &AuctionInstance, order: PreferenceOrder, seed: u64, max_iters: usize) -> GroupingRun {
    form_buyer_groups_with(instance, &order, seed, max_iters)
}

pub fn form_buyer_groups_with<P: Preference + ?Sized>(
    instance: &AuctionInstance,
    pref: &P,
    seed: u64,
    max_iters: usize,
) -> GroupingRun {
    let n = instance.buyers.len();
    let mut grouping = BuyerGrouping::new();
    let max_rounds = max_iters.max(1);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let before = grouping.len();
        for c in instance.channels_by_ask() {
            if grouping.group(c).is_some() {
                continue;
            }
            let held = grouping.memberships(n);
            let participants: Vec<usize> = (0..n).filter(|&b| held[b] < instance.buyers[b].demand).collect();
            if participants.is_empty() {
                continue;
            }
            let game = ChannelGame::new(instance, c, participants);
            let coop = game.cooperation_graph();
            let cap = max_iters.max(1) * game.n_players();
            let round_seed = derive_seed(derive_seed(seed, c as u64), rounds as u64);
            let (partition, _) = run_until_stable(&game, &coop, pref, Dynamics::Switch, round_seed, cap);
            let ask = instance.channels[c].ask;
            let winner = partition.coalitions().iter().map(|g| (game.bid(g), g)).filter(|(bid, _)| *bid >= ask).fold(
                None::<(f64, &Coalition)>,
                |best, (bid, g)| match best {
                    Some((b, _)) if b <= bid => best,
                    _ => Some((bid, g)),
                },
            );
            if let Some((_, g)) = winner {
                let buyers: Vec<usize> = g.members().iter().map(|&p| game.buyer(p)).collect();
                grouping.insert(c, trim_to_minimal_winning(&buyers, |b| instance.buyers[b].valuations[c], ask));
            }
        }
        if grouping.len() == before {
            converged = true;
            break;
        }
    }
    GroupingRun { grouping, rounds, converged }
}

/// Each channel, cheapest first, goes to the single highest-valuing buyer
/// with demand left, if that valuation covers the ask.
pub fn no_grouping(instance: &AuctionInstance) -> BuyerGrouping {
    let mut left: Vec<usize> = instance.buyers.iter().map(|b| b.demand).collect();
    let mut grouping = BuyerGrouping::new();
    for c in instance.channels_by_ask() {
        let best = (0..instance.buyers.len()).filter(|&b| left[b] > 0).map(|b| (instance.buyers[b].valuations[c], b)).fold(
            None::<(f64, usize)>,
            |acc, (v, b)| match acc {
                Some((bv, _)) if bv >= v => acc,
                _ => Some((v, b)),
            },
        );
        if let Some((v, b)) = best {
            if v >= instance.channels[c].ask {
                left[b] -= 1;
                grouping.insert(c, vec![b]);
            }
        }
    }
    grouping
}

/// Value-blind baseline: each channel, cheapest first, draws buyers with
/// free demand slots in random order and packs the conflict-free ones until
/// the pooled bid covers the ask. The channel stays unsold if the pool runs
/// dry first.
pub fn random_grouping(instance: &AuctionInstance, seed: u64) -> BuyerGrouping {
    let mut rng = rng_from_seed(seed);
    let mut left: Vec<usize> = instance.buyers.iter().map(|b| b.demand).collect();
    let mut grouping = BuyerGrouping::new();
    for c in instance.channels_by_ask() {
        let ask = instance.channels[c].ask;
        let mut pool: Vec<usize> = (0..instance.buyers.len()).filter(|&b| left[b] > 0).collect();
        pool.shuffle(&mut rng);
        let mut group: Vec<usize> = Vec::new();
        let mut bid = 0.0;
        for b in pool {
            if group.iter().all(|&g| !instance.conflicts(g, b)) {
                group.push(b);
                bid += instance.buyers[b].valuations[c];
                if bid >= ask {
                    break;
                }
            }
        }
        if !group.is_empty() && bid >= ask {
            for &b in &group {
                left[b] -= 1;
            }
            grouping.insert(c, group);
        }
    }
    grouping
}

/// Instance generator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionParams {
    pub n_channels: usize,
    pub ask_range: (f64, f64),
    pub valuation_range: (f64, f64),
    pub demand_max: usize,
    pub interference_radius: f64,
    pub area: Area,
    pub max_iters: usize,
}

impl Default for AuctionParams {
    fn default() -> Self {
        AuctionParams {
            n_channels: 20,
            ask_range: (4.0, 10.0),
            valuation_range: (1.0, 6.0),
            demand_max: 3,
            interference_radius: 20.0,
            area: Area { width: 100.0, height: 100.0 },
            max_iters: 50,
        }
    }
}

fn uniform_in(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Random instance: buyers placed uniformly in the area conflict within the
/// interference radius; asks, valuations and demands are uniform.
pub fn generate_instance(params: &AuctionParams, n_buyers: usize, seed: u64) -> Result<AuctionInstance, AuctionError> {
    let placement =
        NetworkGraph::generate_uniform(n_buyers, params.area, params.interference_radius, NodeKind::User, derive_seed(seed, 0))?;
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let channels: Vec<Channel> =
        (0..params.n_channels).map(|id| Channel { id, ask: uniform_in(&mut rng, params.ask_range) }).collect();
    let demand_cap = params.demand_max.min(params.n_channels).max(1);
    let buyers: Vec<Buyer> = (0..n_buyers)
        .map(|id| Buyer {
            id,
            valuations: (0..params.n_channels).map(|_| uniform_in(&mut rng, params.valuation_range)).collect(),
            demand: rng.gen_range(1..=demand_cap),
        })
        .collect();
    let conflict = AdjacencyList::from_fn(n_buyers, |a, b| placement.adjacent(a, b));
    AuctionInstance::new(channels, buyers, conflict)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Cagb,
    Random,
    NoGrouping,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Cagb, Algorithm::Random, Algorithm::NoGrouping];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Cagb => "cagb",
            Algorithm::Random => "random",
            Algorithm::NoGrouping => "no-grouping",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionRow {
    pub algorithm: Algorithm,
    pub n_buyers: usize,
    pub seed: u64,
    pub selling_ratio: f64,
    pub satisfaction: f64,
    pub revenue: f64,
    pub converged: bool,
}

/// All three algorithms on one generated instance.
pub fn run_auction_cell(params: &AuctionParams, n_buyers: usize, seed: u64) -> Result<Vec<AuctionRow>, AuctionError> {
    let instance = generate_instance(params, n_buyers, seed)?;
    let cagb = form_buyer_groups(&instance, PreferenceOrder::Pareto, derive_seed(seed, 2), params.max_iters);
    let groupings = [
        (Algorithm::Cagb, cagb.grouping, cagb.converged),
        (Algorithm::Random, random_grouping(&instance, derive_seed(seed, 3)), true),
        (Algorithm::NoGrouping, no_grouping(&instance), true),
    ];
    groupings
        .into_iter()
        .map(|(algorithm, grouping, converged)| {
            let out = double_auction_clear(&grouping, &instance)?;
            Ok(AuctionRow {
                algorithm,
                n_buyers,
                seed,
                selling_ratio: out.selling_ratio,
                satisfaction: out.satisfaction,
                revenue: out.revenue,
                converged,
            })
        })
        .collect()
}

/// Sweep over buyer counts and seeds, rows ordered by (count, seed, algorithm).
pub fn run_auction_experiment(
    params: &AuctionParams,
    buyer_counts: &[usize],
    seeds: &[u64],
) -> Result<Vec<AuctionRow>, AuctionError> {
    let mut rows = Vec::new();
    for &n in buyer_counts {
        for &seed in seeds {
            rows.extend(run_auction_cell(params, n, seed)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(asks: &[f64], vals: &[Vec<f64>], demands: &[usize], conflicts: &[(usize, usize)]) -> AuctionInstance {
        let channels = asks.iter().enumerate().map(|(id, &ask)| Channel { id, ask }).collect();
        let buyers =
            vals.iter().zip(demands).enumerate().map(|(id, (v, &demand))| Buyer { id, valuations: v.clone(), demand }).collect();
        let conflict = AdjacencyList::from_fn(vals.len(), |a, b| conflicts.contains(&(a, b)) || conflicts.contains(&(b, a)));
        AuctionInstance::new(channels, buyers, conflict).unwrap()
    }

    #[test]
    fn group_bids() {
        let inst = instance(&[5.0], &[vec![3.0], vec![4.0], vec![1.0]], &[1, 1, 1], &[(1, 2)]);
        assert_eq!(group_bid(&inst, &[], 0).unwrap(), 0.0);
        assert_eq!(group_bid(&inst, &[1], 0).unwrap(), 4.0);
        assert_eq!(group_bid(&inst, &[0, 1], 0).unwrap(), 7.0);
        assert_eq!(group_bid(&inst, &[1, 2], 0), Err(AuctionError::Conflict(1, 2, 0)));
    }

    #[test]
    fn clearing_rule() {
        let inst = instance(&[5.0], &[vec![10.0]], &[1], &[]);
        let empty = double_auction_clear(&BuyerGrouping::new(), &inst).unwrap();
        assert_eq!(empty.selling_ratio, 0.0);

        let mut g = BuyerGrouping::new();
        g.insert(0, vec![0]);
        let out = double_auction_clear(&g, &inst).unwrap();
        assert_eq!(out.trades.len(), 1);
        assert_eq!(out.trades[0].price, 7.5);
        assert_eq!(out.selling_ratio, 1.0);
        assert_eq!(out.satisfaction, 1.0);

        let poor = instance(&[5.0], &[vec![4.0]], &[1], &[]);
        let out = double_auction_clear(&g, &poor).unwrap();
        assert!(out.trades.is_empty());
    }

    #[test]
    fn clearing_rejects_invalid_groupings() {
        let inst = instance(&[1.0, 1.0], &[vec![2.0, 2.0], vec![2.0, 2.0]], &[1, 2], &[(0, 1)]);
        let mut g = BuyerGrouping::new();
        g.insert(0, vec![0, 1]);
        assert!(matches!(double_auction_clear(&g, &inst), Err(AuctionError::Conflict(0, 1, 0))));
        let mut g = BuyerGrouping::new();
        g.insert(0, vec![0]);
        g.insert(1, vec![0]);
        assert!(matches!(double_auction_clear(&g, &inst), Err(AuctionError::OverDemand { buyer: 0, .. })));
    }

    #[test]
    fn single_buyer_single_channel() {
        let inst = instance(&[2.0], &[vec![5.0]], &[1], &[]);
        let run = form_buyer_groups(&inst, PreferenceOrder::Pareto, 0, 10);
        assert!(run.converged);
        assert_eq!(run.grouping.group(0), Some(&[0][..]));
        let out = double_auction_clear(&run.grouping, &inst).unwrap();
        assert_eq!(out.satisfaction, 1.0);
    }

    #[test]
    fn poor_buyers_pool_to_win() {
        // Neither 3 nor 4 covers the ask of 6; together they do.
        let inst = instance(&[6.0], &[vec![3.0], vec![4.0]], &[1, 1], &[]);
        let solo = double_auction_clear(&no_grouping(&inst), &inst).unwrap();
        assert_eq!(solo.selling_ratio, 0.0);
        let run = form_buyer_groups(&inst, PreferenceOrder::Pareto, 3, 10);
        assert_eq!(run.grouping.group(0), Some(&[0, 1][..]));
        let out = double_auction_clear(&run.grouping, &inst).unwrap();
        assert_eq!(out.selling_ratio, 1.0);
        assert_eq!(out.trades[0].price, 6.5);
    }

    #[test]
    fn conflicting_buyers_never_share() {
        let inst = instance(&[6.0, 6.0], &[vec![3.0, 3.0], vec![4.0, 4.0]], &[2, 2], &[(0, 1)]);
        for seed in 0..10 {
            let run = form_buyer_groups(&inst, PreferenceOrder::Pareto, seed, 10);
            for (_, g) in run.grouping.iter() {
                assert!(g.len() < 2);
            }
        }
    }

    #[test]
    fn channel_game_utility() {
        let inst = instance(&[6.0], &[vec![3.0], vec![4.0]], &[1, 1], &[]);
        let game = ChannelGame::new(&inst, 0, vec![0, 1]);
        let pair = Coalition::new([0, 1]).unwrap();
        // v (B - ask) / 2B with B = 7.
        assert!((game.utility(0, &pair) - 3.0 / 14.0).abs() < 1e-12);
        assert!((game.utility(0, &Coalition::singleton(0)) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn generated_runs_respect_invariants() {
        let params = AuctionParams::default();
        for seed in 0..5 {
            let inst = generate_instance(&params, 25, seed).unwrap();
            let groupings = [
                form_buyer_groups(&inst, PreferenceOrder::Pareto, seed, params.max_iters).grouping,
                random_grouping(&inst, seed),
                no_grouping(&inst),
            ];
            for g in groupings {
                g.validate(&inst).unwrap();
                let out = double_auction_clear(&g, &inst).unwrap();
                for t in &out.trades {
                    let ask = inst.channels()[t.channel].ask;
                    assert!(t.bid >= ask && ask >= 0.0);
                    assert!(ask <= t.price && t.price <= t.bid);
                }
                assert!((0.0..=1.0).contains(&out.selling_ratio));
                assert!((0.0..=1.0).contains(&out.satisfaction));
            }
        }
    }

    #[test]
    fn trimming_keeps_a_minimal_winning_subset() {
        let vals = [1.0, 5.0, 4.0, 2.0];
        let trimmed = trim_to_minimal_winning(&[0, 1, 2, 3], |b| vals[b], 8.5);
        // Dropping 1.0 leaves 11 >= 8.5; dropping 2.0 too would leave 9.
        assert_eq!(trimmed, vec![1, 2]);
        let bid: f64 = trimmed.iter().map(|&b| vals[b]).sum();
        assert!(bid >= 8.5);
        for &b in &trimmed {
            assert!(bid - vals[b] < 8.5);
        }
        assert_eq!(trim_to_minimal_winning(&[2], |b| vals[b], 10.0), vec![2]);
    }

    #[test]
    fn cagb_groups_are_minimal_winning() {
        let params = AuctionParams::default();
        for seed in 0..5 {
            let inst = generate_instance(&params, 30, seed).unwrap();
            let run = form_buyer_groups(&inst, PreferenceOrder::Pareto, seed, params.max_iters);
            assert!(run.converged);
            for (c, g) in run.grouping.iter() {
                let ask = inst.channels()[c].ask;
                let bid = group_bid(&inst, g, c).unwrap();
                assert!(bid >= ask);
                for &b in g {
                    assert!(bid - inst.buyers()[b].valuations[c] < ask);
                }
            }
        }
    }

    #[test]
    fn zero_channels() {
        let params = AuctionParams { n_channels: 0, ..Default::default() };
        let rows = run_auction_experiment(&params, &[5], &[1, 2]).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.selling_ratio == 0.0));
    }
}
