use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::preference::{MoveDelta, Preference};
use super::{potential, Coalition, EngineError, Game, Partition};
use crate::rng::{rng_from_seed, SimRng};
use crate::topology::Neighborhood;

/// Coalitions up to this size have every bipartition tried.
pub const SPLIT_EXHAUSTIVE_MAX: usize = 12;
/// Bipartitions sampled from a larger coalition.
pub const SPLIT_SAMPLES: usize = 2048;

/// One player leaving `origin` for `destination` (`None` = a new singleton).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Move {
    pub mover: usize,
    pub origin: Coalition,
    pub destination: Option<Coalition>,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.destination {
            Some(d) => write!(f, "player {} from {} to {}", self.mover, self.origin, d),
            None => write!(f, "player {} from {} to a new singleton", self.mover, self.origin),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Switch(Move),
    Merge(Coalition, Coalition),
    Split { whole: Coalition, left: Coalition, right: Coalition },
    Swap { first: usize, second: usize },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Switch(m) => match &m.destination {
                Some(d) => write!(f, "switch {} {}->{}", m.mover, m.origin, d),
                None => write!(f, "switch {} {}->new", m.mover, m.origin),
            },
            Action::Merge(a, b) => write!(f, "merge {a}+{b}"),
            Action::Split { whole, left, right } => write!(f, "split {whole}->{left}|{right}"),
            Action::Swap { first, second } => write!(f, "swap {first}<->{second}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dynamics {
    #[serde(rename = "merge-split")]
    MergeSplit,
    #[serde(rename = "switch")]
    Switch,
    #[serde(rename = "switch+swap")]
    SwitchSwap,
}

impl Dynamics {
    pub const ALL: [Dynamics; 3] = [Dynamics::MergeSplit, Dynamics::Switch, Dynamics::SwitchSwap];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dynamics::MergeSplit => "merge-split",
            Dynamics::Switch => "switch",
            Dynamics::SwitchSwap => "switch+swap",
        }
    }
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dynamics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dynamics::ALL.into_iter().find(|d| d.as_str() == s).ok_or_else(|| format!("unknown dynamics `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    Stable,
    CycleDetected,
    IterationCap,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Stable => "stable",
            TerminalStatus::CycleDetected => "cycle-detected",
            TerminalStatus::IterationCap => "iteration-cap",
        }
    }
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub action: Action,
    pub partition: String,
    pub hash: u64,
    /// Sum of utilities after the action.
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub initial_potential: f64,
    pub entries: Vec<TraceEntry>,
    pub status: TerminalStatus,
    /// Set when some split scan sampled bipartitions instead of enumerating.
    pub split_sampled: bool,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    iter: usize,
    action: String,
    partition: &'a str,
    potential: f64,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.entries.len()
    }

    /// Potential before the first action followed by the potential after each.
    pub fn potentials(&self) -> Vec<f64> {
        std::iter::once(self.initial_potential).chain(self.entries.iter().map(|e| e.potential)).collect()
    }

    /// One JSON object per applied action, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = TraceLine { iter: e.iter, action: e.action.to_string(), partition: &e.partition, potential: e.potential };
            out.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
            out.push('\n');
        }
        out
    }
}

fn check_move(m: &Move) -> Result<(), EngineError> {
    if !m.origin.contains(m.mover) {
        return Err(EngineError::MalformedMove(format!("mover {} not in origin {}", m.mover, m.origin)));
    }
    if let Some(d) = &m.destination {
        if d.contains(m.mover) {
            return Err(EngineError::MalformedMove(format!("mover {} already in destination {}", m.mover, d)));
        }
    }
    Ok(())
}

/// Whether `pref` accepts `m`.
///
/// Returns `Err(Infeasible)` when the grown destination or the remainder of
/// the origin would not be a feasible coalition; that is distinct from the
/// order disapproving (`Ok(false)`).
pub fn approves<G, P>(pref: &P, game: &G, m: &Move) -> Result<bool, EngineError>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    check_move(m)?;
    let grown = match &m.destination {
        Some(d) => d.with(m.mover),
        None => Coalition::singleton(m.mover),
    };
    if grown.len() > 1 && !game.feasible(&grown) {
        return Err(EngineError::Infeasible(grown));
    }
    let remainder = m.origin.without(m.mover);
    if let Some(rest) = &remainder {
        if rest.len() > 1 && !game.feasible(rest) {
            return Err(EngineError::Infeasible(rest.clone()));
        }
    }
    let delta = MoveDelta {
        mover: (game.utility(m.mover, &m.origin), game.utility(m.mover, &grown)),
        origin_mates: remainder
            .as_ref()
            .map(|rest| rest.members().iter().map(|&p| (game.utility(p, &m.origin), game.utility(p, rest))).collect())
            .unwrap_or_default(),
        destination: m
            .destination
            .as_ref()
            .map(|d| d.members().iter().map(|&p| (game.utility(p, d), game.utility(p, &grown))).collect())
            .unwrap_or_default(),
    };
    Ok(pref.approves_move(&delta))
}

fn apply_move(partition: &Partition, m: &Move) -> Partition {
    let mut remove = vec![partition.index_of(m.mover)];
    let mut add = Vec::new();
    match &m.destination {
        Some(d) => {
            remove.push(partition.index_of(d.least()));
            add.push(d.with(m.mover));
        }
        None => add.push(Coalition::singleton(m.mover)),
    }
    if let Some(rest) = m.origin.without(m.mover) {
        add.push(rest);
    }
    partition.replaced(&remove, add)
}

/// Approved single-player moves of `player`, tried in a shuffled order.
fn try_switch<G, N, P>(
    game: &G,
    graph: &N,
    partition: &Partition,
    pref: &P,
    player: usize,
    rng: &mut SimRng,
) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    let mut candidates = switch_candidates(graph, partition, player);
    candidates.shuffle(rng);
    let origin = partition.coalition_of(player).clone();
    for dest in candidates {
        let m = Move { mover: player, origin: origin.clone(), destination: dest.map(|k| partition.coalitions()[k].clone()) };
        if let Ok(true) = approves(pref, game, &m) {
            return Some((apply_move(partition, &m), Action::Switch(m)));
        }
    }
    None
}

/// Coalition indices adjacent to `player` (other than its own), ascending,
/// followed by `None` for a new singleton when the player is not alone.
fn switch_candidates<N: Neighborhood + ?Sized>(graph: &N, partition: &Partition, player: usize) -> Vec<Option<usize>> {
    let own = partition.index_of(player);
    let mut idx: Vec<usize> = graph.neighbors_of(player).iter().map(|&nb| partition.index_of(nb)).filter(|&k| k != own).collect();
    idx.sort_unstable();
    idx.dedup();
    let mut out: Vec<Option<usize>> = idx.into_iter().map(Some).collect();
    if partition.coalitions()[own].len() > 1 {
        out.push(None);
    }
    out
}

/// A uniformly random player tries to join a neighboring coalition or go solo.
pub fn switch_step<G, N, P>(game: &G, graph: &N, partition: &Partition, pref: &P, rng: &mut SimRng) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    let n = partition.n_players();
    if n < 2 {
        return None;
    }
    let player = rng.gen_range(0..n);
    try_switch(game, graph, partition, pref, player, rng)
}

fn try_swap<G, P>(game: &G, partition: &Partition, pref: &P, first: usize, rng: &mut SimRng) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    let home = partition.coalition_of(first).clone();
    let mut others: Vec<usize> = (0..partition.n_players()).filter(|p| !home.contains(*p)).collect();
    others.shuffle(rng);
    for second in others {
        let away = partition.coalition_of(second).clone();
        // Phase one: `first` leaves home and joins `second`'s coalition.
        let leave = Move { mover: first, origin: home.clone(), destination: Some(away.clone()) };
        if approves(pref, game, &leave) != Ok(true) {
            continue;
        }
        let intermediate = apply_move(partition, &leave);
        // Phase two, judged on the intermediate configuration.
        let back = Move { mover: second, origin: away.with(first), destination: home.without(first) };
        if approves(pref, game, &back) != Ok(true) {
            continue;
        }
        return Some((apply_move(&intermediate, &back), Action::Swap { first, second }));
    }
    None
}

/// One-to-one exchange: a random player and a partner from another coalition
/// trade places, each half of the exchange approved on its own.
pub fn swap_step<G, P>(game: &G, partition: &Partition, pref: &P, rng: &mut SimRng) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    let n = partition.n_players();
    if n < 2 {
        return None;
    }
    let first = rng.gen_range(0..n);
    try_swap(game, partition, pref, first, rng)
}

/// First approved merge of two coalitions, scanning pairs lowest-first.
pub fn merge_step<G, P>(game: &G, partition: &Partition, pref: &P) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    let cs = partition.coalitions();
    for a in 0..cs.len() {
        for b in (a + 1)..cs.len() {
            let union = cs[a].union(&cs[b]);
            if !game.feasible(&union) {
                continue;
            }
            let changes: Vec<(f64, f64)> = [&cs[a], &cs[b]]
                .into_iter()
                .flat_map(|part| part.members().iter().map(|&p| (game.utility(p, part), game.utility(p, &union))))
                .collect();
            if pref.approves_regroup(&changes) {
                let action = Action::Merge(cs[a].clone(), cs[b].clone());
                return Some((partition.replaced(&[a, b], vec![union]), action));
            }
        }
    }
    None
}

/// Bipartitions of `whole` as (left, right); the least member always sits
/// on the left so each unordered split appears once.
fn bipartitions(whole: &Coalition, rng: &mut SimRng, sampled: &mut bool) -> Vec<(Coalition, Coalition)> {
    let m = whole.members();
    let k = m.len();
    let build = |right_of: &dyn Fn(usize) -> bool| {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for (t, &p) in m.iter().enumerate() {
            if t > 0 && right_of(t - 1) {
                r.push(p);
            } else {
                l.push(p);
            }
        }
        (Coalition(l), Coalition(r))
    };
    if k <= SPLIT_EXHAUSTIVE_MAX {
        (1u64..(1u64 << (k - 1))).map(|mask| build(&|t| mask & (1 << t) != 0)).collect()
    } else {
        *sampled = true;
        (0..SPLIT_SAMPLES)
            .filter_map(|_| {
                let bits: Vec<bool> = (0..k - 1).map(|_| rng.gen()).collect();
                bits.iter().any(|&b| b).then(|| build(&|t| bits[t]))
            })
            .collect()
    }
}

fn split_scan<G, P>(
    game: &G,
    partition: &Partition,
    pref: &P,
    rng: &mut SimRng,
    sampled: &mut bool,
) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    for (idx, whole) in partition.coalitions().iter().enumerate() {
        if whole.len() < 2 {
            continue;
        }
        for (left, right) in bipartitions(whole, rng, sampled) {
            if (left.len() > 1 && !game.feasible(&left)) || (right.len() > 1 && !game.feasible(&right)) {
                continue;
            }
            let changes: Vec<(f64, f64)> = [&left, &right]
                .into_iter()
                .flat_map(|part| part.members().iter().map(|&p| (game.utility(p, whole), game.utility(p, part))))
                .collect();
            if pref.approves_regroup(&changes) {
                let action = Action::Split { whole: whole.clone(), left: left.clone(), right: right.clone() };
                return Some((partition.replaced(&[idx], vec![left, right]), action));
            }
        }
    }
    None
}

/// First approved split, scanning coalitions lowest-first. The generator is
/// only consulted for coalitions above [`SPLIT_EXHAUSTIVE_MAX`].
pub fn split_step<G, P>(game: &G, partition: &Partition, pref: &P, rng: &mut SimRng) -> Option<(Partition, Action)>
where
    G: Game + ?Sized,
    P: Preference + ?Sized,
{
    split_scan(game, partition, pref, rng, &mut false)
}

/// A move some player would make from `partition`, if any. Players are
/// scanned lowest-first; destinations in ascending coalition order then the
/// new singleton.
pub fn find_improving_move<G, N, P>(game: &G, graph: &N, partition: &Partition, pref: &P) -> Option<Move>
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    for player in 0..partition.n_players() {
        let origin = partition.coalition_of(player);
        for dest in switch_candidates(graph, partition, player) {
            let m = Move { mover: player, origin: origin.clone(), destination: dest.map(|k| partition.coalitions()[k].clone()) };
            if let Ok(true) = approves(pref, game, &m) {
                return Some(m);
            }
        }
    }
    None
}

/// No single player has an approved move.
pub fn is_stable<G, N, P>(game: &G, graph: &N, partition: &Partition, pref: &P) -> bool
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    find_improving_move(game, graph, partition, pref).is_none()
}

fn shuffled_players(n: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Runs the chosen dynamics from all singletons.
///
/// Switch dynamics sweep players in a fresh shuffled order until one moves;
/// a sweep with no mover means the partition is stable. Switch+swap falls
/// back to a swap sweep before declaring stability. Merge-split tries a merge
/// then a split. A repeated canonical partition ends the run as
/// `CycleDetected`; `max_iters` applied actions end it as `IterationCap`.
pub fn run_until_stable<G, N, P>(
    game: &G,
    graph: &N,
    pref: &P,
    dynamics: Dynamics,
    seed: u64,
    max_iters: usize,
) -> (Partition, Trace)
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    run_from_partition(game, graph, pref, dynamics, Partition::singletons(game.n_players()), seed, max_iters)
}

/// [`run_until_stable`] from an arbitrary starting partition.
pub fn run_from_partition<G, N, P>(
    game: &G,
    graph: &N,
    pref: &P,
    dynamics: Dynamics,
    initial: Partition,
    seed: u64,
    max_iters: usize,
) -> (Partition, Trace)
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    let n = game.n_players();
    let mut rng = rng_from_seed(seed);
    let mut partition = initial;
    let mut seen = HashSet::from([partition.canonical_hash()]);
    let mut trace = Trace {
        initial_potential: potential(game, &partition),
        entries: Vec::new(),
        status: TerminalStatus::Stable,
        split_sampled: false,
    };
    let max_iters = max_iters.max(1);

    loop {
        let step = match dynamics {
            Dynamics::MergeSplit => merge_step(game, &partition, pref)
                .or_else(|| split_scan(game, &partition, pref, &mut rng, &mut trace.split_sampled)),
            Dynamics::Switch => {
                shuffled_players(n, &mut rng).into_iter().find_map(|p| try_switch(game, graph, &partition, pref, p, &mut rng))
            }
            Dynamics::SwitchSwap => shuffled_players(n, &mut rng)
                .into_iter()
                .find_map(|p| try_switch(game, graph, &partition, pref, p, &mut rng))
                .or_else(|| {
                    shuffled_players(n, &mut rng).into_iter().find_map(|p| try_swap(game, &partition, pref, p, &mut rng))
                }),
        };
        let Some((next, action)) = step else {
            trace.status = TerminalStatus::Stable;
            break;
        };
        partition = next;
        let hash = partition.canonical_hash();
        trace.entries.push(TraceEntry {
            iter: trace.entries.len() + 1,
            action,
            partition: partition.canonical_string(),
            hash,
            potential: potential(game, &partition),
        });
        if !seen.insert(hash) {
            trace.status = TerminalStatus::CycleDetected;
            break;
        }
        if trace.entries.len() >= max_iters {
            trace.status = TerminalStatus::IterationCap;
            break;
        }
    }
    log::debug!("{} run finished after {} actions: {}", dynamics, trace.entries.len(), trace.status);
    (partition, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::{enumerate_stable_partitions, PreferenceOrder};
    use crate::topology::AdjacencyList;

    struct FnGame<U, F> {
        n: usize,
        utility: U,
        feasible: F,
    }

    impl<U: Fn(usize, &Coalition) -> f64, F: Fn(&Coalition) -> bool> Game for FnGame<U, F> {
        fn n_players(&self) -> usize {
            self.n
        }
        fn utility(&self, player: usize, coalition: &Coalition) -> f64 {
            (self.utility)(player, coalition)
        }
        fn feasible(&self, coalition: &Coalition) -> bool {
            (self.feasible)(coalition)
        }
    }

    fn game<U: Fn(usize, &Coalition) -> f64>(n: usize, utility: U) -> FnGame<U, fn(&Coalition) -> bool> {
        FnGame { n, utility, feasible: |_| true }
    }

    fn complete(n: usize) -> AdjacencyList {
        AdjacencyList::from_fn(n, |_, _| true)
    }

    fn line(n: usize) -> AdjacencyList {
        AdjacencyList::from_fn(n, |a, b| a.abs_diff(b) == 1)
    }

    fn c(members: &[usize]) -> Coalition {
        Coalition::new(members.iter().copied()).unwrap()
    }

    #[test]
    fn approves_checks_shape_and_feasibility() {
        let g = FnGame { n: 3, utility: |_, s: &Coalition| s.len() as f64, feasible: |s: &Coalition| !s.contains(2) };
        let bad = Move { mover: 0, origin: c(&[1]), destination: None };
        assert!(matches!(approves(&PreferenceOrder::Pareto, &g, &bad), Err(EngineError::MalformedMove(_))));
        let into = Move { mover: 0, origin: c(&[0]), destination: Some(c(&[0, 1])) };
        assert!(matches!(approves(&PreferenceOrder::Pareto, &g, &into), Err(EngineError::MalformedMove(_))));
        let infeasible = Move { mover: 0, origin: c(&[0]), destination: Some(c(&[2])) };
        assert_eq!(approves(&PreferenceOrder::Pareto, &g, &infeasible), Err(EngineError::Infeasible(c(&[0, 2]))));
        let join = Move { mover: 0, origin: c(&[0]), destination: Some(c(&[1])) };
        assert_eq!(approves(&PreferenceOrder::Pareto, &g, &join), Ok(true));
        let leave = Move { mover: 0, origin: c(&[0, 1]), destination: None };
        assert_eq!(approves(&PreferenceOrder::Pareto, &g, &leave), Ok(false));
    }

    #[test]
    fn single_player_is_trivially_stable() {
        let g = game(1, |_, _| 0.0);
        let graph = complete(1);
        let mut rng = rng_from_seed(0);
        let p = Partition::singletons(1);
        assert!(switch_step(&g, &graph, &p, &PreferenceOrder::Pareto, &mut rng).is_none());
        assert!(swap_step(&g, &p, &PreferenceOrder::Pareto, &mut rng).is_none());
        for d in Dynamics::ALL {
            let (out, trace) = run_until_stable(&g, &graph, &PreferenceOrder::Pareto, d, 1, 10);
            assert_eq!(out, p);
            assert_eq!(trace.status, TerminalStatus::Stable);
            assert_eq!(trace.iterations(), 0);
        }
    }

    #[test]
    fn adjacent_pair_forms_grand_coalition() {
        let g = game(2, |_, s: &Coalition| s.len() as f64);
        for d in Dynamics::ALL {
            for order in PreferenceOrder::ALL {
                let (out, trace) = run_until_stable(&g, &complete(2), &order, d, 3, 10);
                assert_eq!(out.canonical_string(), "{0,1}");
                assert_eq!(trace.status, TerminalStatus::Stable);
            }
        }
    }

    #[test]
    fn non_adjacent_players_never_switch_together() {
        let g = game(2, |_, s: &Coalition| s.len() as f64);
        let empty = AdjacencyList::from_fn(2, |_, _| false);
        let (out, _) = run_until_stable(&g, &empty, &PreferenceOrder::Pareto, Dynamics::Switch, 0, 10);
        assert_eq!(out, Partition::singletons(2));
    }

    #[test]
    fn player_better_alone_leaves() {
        // Player 2 loses in every group; the others don't care about it.
        let g = game(3, |p, s: &Coalition| if p == 2 { -(s.len() as f64) } else { 0.0 });
        let start = Partition::new(3, vec![c(&[0, 1, 2])]).unwrap();
        for order in PreferenceOrder::ALL {
            let (out, _) = run_from_partition(&g, &complete(3), &order, Dynamics::Switch, start.clone(), 0, 10);
            assert_eq!(out.canonical_string(), "{0,1}{2}");
        }
    }

    #[test]
    fn switch_on_a_line_matches_brute_force_best_move() {
        // Line 0-1-2; the center prefers {1,2} to {0,1} to being alone.
        let u = |p: usize, s: &Coalition| match (p, s.members()) {
            (1, [1, 2]) => 3.0,
            (1, [0, 1]) => 2.0,
            (_, m) if m.len() == 1 => 0.0,
            (0, [0, 1]) | (2, [1, 2]) => 0.0,
            _ => -1.0,
        };
        let g = game(3, u);
        let graph = line(3);
        let start = Partition::new(3, vec![c(&[0]), c(&[1]), c(&[2])]).unwrap();
        let origin = c(&[1]);
        // Brute force: every destination available to player 1.
        let approved: Vec<Coalition> = [c(&[0]), c(&[2])]
            .into_iter()
            .filter(|d| {
                approves(&PreferenceOrder::Selfish, &g, &Move { mover: 1, origin: origin.clone(), destination: Some(d.clone()) })
                    == Ok(true)
            })
            .collect();
        assert_eq!(approved.len(), 2);
        // Only the center can move; any approved move lands in one of the enumerated targets.
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            if let Some((next, Action::Switch(m))) = switch_step(&g, &graph, &start, &PreferenceOrder::Selfish, &mut rng) {
                assert_eq!(m.mover, 1);
                assert!(approved.contains(m.destination.as_ref().unwrap()));
                assert_eq!(next.coalition_of(1).len(), 2);
            }
        }
        // From {0,1}{2} the center still prefers joining 2, and 0 does not object.
        let mid = Partition::new(3, vec![c(&[0, 1]), c(&[2])]).unwrap();
        let m = find_improving_move(&g, &graph, &mid, &PreferenceOrder::Selfish).unwrap();
        assert_eq!((m.mover, m.destination), (1, Some(c(&[2]))));
    }

    #[test]
    fn merge_takes_first_approved_pair() {
        // Only {1} and {2} gain from merging.
        let g = game(3, |_, s: &Coalition| if s.members() == [1, 2] { 1.0 } else { 0.0 });
        let p = Partition::singletons(3);
        for order in PreferenceOrder::ALL {
            let (next, action) = merge_step(&g, &p, &order).unwrap();
            assert_eq!(action, Action::Merge(c(&[1]), c(&[2])));
            assert_eq!(next.canonical_string(), "{0}{1,2}");
            assert!(merge_step(&g, &next, &order).is_none());
        }
    }

    #[test]
    fn coalition_order_merges_on_aggregate_gain() {
        // Merging hurts player 0 slightly but helps 1 a lot.
        let g = game(2, |p, s: &Coalition| match (p, s.len()) {
            (0, 2) => -0.5,
            (1, 2) => 2.0,
            _ => 0.0,
        });
        let p = Partition::singletons(2);
        assert!(merge_step(&g, &p, &PreferenceOrder::Pareto).is_none());
        assert!(merge_step(&g, &p, &PreferenceOrder::Selfish).is_none());
        assert!(merge_step(&g, &p, &PreferenceOrder::Coalition).is_some());
    }

    #[test]
    fn split_of_four_finds_the_single_profitable_bipartition() {
        let whole = c(&[0, 1, 2, 3]);
        let target = (c(&[0, 3]), c(&[1, 2]));
        let g = game(4, |_, s: &Coalition| {
            if s.members() == [0, 3] || s.members() == [1, 2] {
                1.0
            } else if s.len() == 4 {
                0.5
            } else {
                0.0
            }
        });
        let mut rng = rng_from_seed(0);
        let mut sampled = false;
        let all = bipartitions(&whole, &mut rng, &mut sampled);
        assert_eq!(all.len(), 7);
        assert!(!sampled);
        let profitable: Vec<_> = all
            .iter()
            .filter(|(l, r)| {
                let changes: Vec<(f64, f64)> = [l, r]
                    .into_iter()
                    .flat_map(|part| part.members().iter().map(|&p| (g.utility(p, &whole), g.utility(p, part))))
                    .collect();
                PreferenceOrder::Pareto.approves_regroup(&changes)
            })
            .collect();
        assert_eq!(profitable, vec![&target]);
        let p = Partition::new(4, vec![whole.clone()]).unwrap();
        let (next, action) = split_step(&g, &p, &PreferenceOrder::Pareto, &mut rng).unwrap();
        assert_eq!(next.canonical_string(), "{0,3}{1,2}");
        assert_eq!(action, Action::Split { whole, left: target.0, right: target.1 });
        assert!(split_step(&g, &Partition::singletons(4), &PreferenceOrder::Pareto, &mut rng).is_none());
    }

    #[test]
    fn large_coalitions_sample_bipartitions() {
        let whole = Coalition::new(0..14).unwrap();
        let mut rng = rng_from_seed(2);
        let mut sampled = false;
        let parts = bipartitions(&whole, &mut rng, &mut sampled);
        assert!(sampled);
        assert!(parts.len() <= SPLIT_SAMPLES && parts.len() > SPLIT_SAMPLES - 5);
        assert!(parts.iter().all(|(l, r)| l.contains(0) && l.len() + r.len() == 14));
    }

    #[test]
    fn swap_exchanges_players_when_both_phases_approve() {
        // 0 wants to be with 3; 2 wants to be with 1; 1 and 3 are indifferent.
        let u = |p: usize, s: &Coalition| match p {
            0 => s.contains(3) as u8 as f64,
            2 => s.contains(1) as u8 as f64,
            _ => 0.0,
        };
        let g = game(4, u);
        let p = Partition::new(4, vec![c(&[0, 1]), c(&[2, 3])]).unwrap();
        let mut found = false;
        for seed in 0..40 {
            let mut rng = rng_from_seed(seed);
            if let Some((next, action)) = swap_step(&g, &p, &PreferenceOrder::Pareto, &mut rng) {
                assert!(matches!(action, Action::Swap { .. }));
                assert_eq!(next.canonical_string(), "{0,3}{1,2}");
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn swap_rejected_when_first_phase_fails() {
        // The joint exchange helps both movers, but player 3 objects to 0 arriving.
        let u = |p: usize, s: &Coalition| match p {
            0 => s.contains(3) as u8 as f64,
            2 => s.contains(1) as u8 as f64,
            3 => -(s.contains(0) as u8 as f64),
            1 => -(s.contains(2) as u8 as f64),
            _ => 0.0,
        };
        let g = game(4, u);
        let p = Partition::new(4, vec![c(&[0, 1]), c(&[2, 3])]).unwrap();
        for seed in 0..40 {
            let mut rng = rng_from_seed(seed);
            assert!(swap_step(&g, &p, &PreferenceOrder::Pareto, &mut rng).is_none());
        }
    }

    #[test]
    fn symmetric_swap_is_rejected() {
        let g = game(4, |_, s: &Coalition| s.len() as f64);
        let p = Partition::new(4, vec![c(&[0, 1]), c(&[2, 3])]).unwrap();
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            assert!(swap_step(&g, &p, &PreferenceOrder::Pareto, &mut rng).is_none());
        }
    }

    #[test]
    fn unstable_partition_reports_a_witness() {
        let g = game(3, |_, s: &Coalition| s.len() as f64);
        let p = Partition::singletons(3);
        assert!(!is_stable(&g, &complete(3), &p, &PreferenceOrder::Pareto));
        let m = find_improving_move(&g, &complete(3), &p, &PreferenceOrder::Pareto).unwrap();
        assert_eq!(m.mover, 0);
        assert_eq!(m.destination, Some(c(&[1])));
        let grand = Partition::new(3, vec![c(&[0, 1, 2])]).unwrap();
        assert!(is_stable(&g, &complete(3), &grand, &PreferenceOrder::Pareto));
        // Grouping never pays: singletons are stable.
        let lonely = game(3, |_, s: &Coalition| -(s.len() as f64));
        assert!(is_stable(&lonely, &complete(3), &p, &PreferenceOrder::Pareto));
    }

    fn random_table_game(n: usize, seed: u64) -> (impl Fn(usize, &Coalition) -> f64, AdjacencyList) {
        let mut rng = rng_from_seed(seed);
        let table: Vec<f64> = (0..n << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let graph = AdjacencyList::from_fn(n, |_, _| rng.gen_bool(0.6));
        let u = move |p: usize, s: &Coalition| {
            if s.len() == 1 {
                return 0.0;
            }
            let mask: usize = s.members().iter().map(|&q| 1 << q).sum();
            table[(p << n) | mask]
        };
        (u, graph)
    }

    #[test]
    fn stable_runs_land_in_the_oracle_set() {
        for seed in 0..100 {
            let (u, graph) = random_table_game(5, seed);
            let g = game(5, u);
            let report = enumerate_stable_partitions(&g, &graph, &PreferenceOrder::Pareto).unwrap();
            let (out, trace) = run_until_stable(&g, &graph, &PreferenceOrder::Pareto, Dynamics::Switch, seed, 1000);
            assert_eq!(trace.status, TerminalStatus::Stable);
            assert!(is_stable(&g, &graph, &out, &PreferenceOrder::Pareto));
            assert!(report.stable.contains(&out), "seed {seed}: {out}");
        }
    }

    #[test]
    fn per_action_invariants_hold_for_each_order() {
        for seed in 0..30 {
            let (u, graph) = random_table_game(6, seed + 500);
            let g = game(6, u);
            for d in Dynamics::ALL {
                for order in PreferenceOrder::ALL {
                    let (_, trace) = run_until_stable(&g, &graph, &order, d, seed, 200);
                    if order == PreferenceOrder::Pareto {
                        assert_ne!(trace.status, TerminalStatus::CycleDetected);
                        let phis = trace.potentials();
                        assert!(phis.windows(2).all(|w| w[1] > w[0]), "{d} seed {seed}");
                    }
                    for e in &trace.entries {
                        let partition = Partition::new(
                            6,
                            e.partition
                                .trim_matches(|ch| ch == '{' || ch == '}')
                                .split("}{")
                                .map(|grp| Coalition::new(grp.split(',').map(|x| x.parse().unwrap())).unwrap())
                                .collect(),
                        )
                        .unwrap();
                        assert!(crate::coalition::partition_feasible(&g, &partition));
                        match &e.action {
                            Action::Switch(m) if order == PreferenceOrder::Selfish => {
                                let grown = partition.coalition_of(m.mover);
                                assert!(g.utility(m.mover, grown) > g.utility(m.mover, &m.origin));
                                if let Some(dest) = &m.destination {
                                    for &q in dest.members() {
                                        assert!(g.utility(q, grown) >= g.utility(q, dest) - 1e-9);
                                    }
                                }
                            }
                            Action::Merge(a, b) if order == PreferenceOrder::Coalition => {
                                let union = a.union(b);
                                let after: f64 = union.members().iter().map(|&q| g.utility(q, &union)).sum();
                                let parts: f64 = [a, b].iter().flat_map(|s| s.members().iter().map(|&q| g.utility(q, s))).sum();
                                assert!(after > parts);
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic_and_serialize_to_json_lines() {
        let (u, graph) = random_table_game(6, 77);
        let g = game(6, u);
        for d in Dynamics::ALL {
            let a = run_until_stable(&g, &graph, &PreferenceOrder::Coalition, d, 9, 100);
            let b = run_until_stable(&g, &graph, &PreferenceOrder::Coalition, d, 9, 100);
            assert_eq!(a, b);
            let lines = a.1.to_json_lines();
            assert_eq!(lines.lines().count(), a.1.iterations());
            for (line, e) in lines.lines().zip(&a.1.entries) {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                assert_eq!(v["iter"], e.iter);
                assert_eq!(v["partition"], e.partition.as_str());
                assert_eq!(v["action"], e.action.to_string());
            }
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let g = game(4, |_, s: &Coalition| s.len() as f64);
        let (out, trace) = run_until_stable(&g, &complete(4), &PreferenceOrder::Pareto, Dynamics::Switch, 0, 1);
        assert_eq!(trace.status, TerminalStatus::IterationCap);
        assert_eq!(trace.iterations(), 1);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn dynamics_names_round_trip() {
        for d in Dynamics::ALL {
            assert_eq!(d.as_str().parse::<Dynamics>(), Ok(d));
        }
        assert!("teleport".parse::<Dynamics>().is_err());
    }
}
