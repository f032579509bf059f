//! Graphical coalition formation: partitions, preference orders, the
//! join/leave/swap and merge/split dynamics, and a brute-force oracle for
//! stable partitions.

mod dynamics;
mod oracle;
mod preference;

use std::fmt;

use thiserror::Error;

use crate::rng::fnv1a64;

pub use dynamics::{
    approves, find_improving_move, is_stable, merge_step, run_from_partition, run_until_stable, split_step, swap_step,
    switch_step, Action, Dynamics, Move, TerminalStatus, Trace, TraceEntry, SPLIT_EXHAUSTIVE_MAX, SPLIT_SAMPLES,
};
pub use oracle::{bell_number, enumerate_stable_partitions, set_partitions, OracleReport, ORACLE_MAX_PLAYERS};
pub use preference::{improves, not_worse, MoveDelta, Preference, PreferenceOrder, TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("malformed move: {0}")]
    MalformedMove(String),
    #[error("resulting coalition {0} is infeasible")]
    Infeasible(Coalition),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("brute-force oracle supports at most {max} players, got {got}")]
    TooManyPlayers { got: usize, max: usize },
    #[error("coalition must have at least one member")]
    EmptyCoalition,
}

/// A nonempty set of player ids, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition(Vec<usize>);

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self, EngineError> {
        let mut v: Vec<usize> = members.into_iter().collect();
        if v.is_empty() {
            return Err(EngineError::EmptyCoalition);
        }
        v.sort_unstable();
        v.dedup();
        Ok(Coalition(v))
    }

    pub fn singleton(player: usize) -> Self {
        Coalition(vec![player])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    // Never true; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn least(&self) -> usize {
        self.0[0]
    }

    pub fn contains(&self, player: usize) -> bool {
        self.0.binary_search(&player).is_ok()
    }

    pub fn with(&self, player: usize) -> Coalition {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&player) {
            v.insert(pos, player);
        }
        Coalition(v)
    }

    /// The coalition minus `player`; `None` if nothing is left.
    pub fn without(&self, player: usize) -> Option<Coalition> {
        let v: Vec<usize> = self.0.iter().copied().filter(|&p| p != player).collect();
        (!v.is_empty()).then_some(Coalition(v))
    }

    pub fn union(&self, other: &Coalition) -> Coalition {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        v.sort_unstable();
        v.dedup();
        Coalition(v)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

/// Disjoint cover of players `0..n`, stored canonically (coalitions sorted by
/// least member) so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    coalitions: Vec<Coalition>,
    n_players: usize,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Partition { coalitions: (0..n).map(Coalition::singleton).collect(), n_players: n }
    }

    pub fn new(n: usize, coalitions: Vec<Coalition>) -> Result<Self, EngineError> {
        let mut seen = vec![false; n];
        for c in &coalitions {
            for &p in c.members() {
                if p >= n {
                    return Err(EngineError::InvalidPartition(format!("player {p} out of range 0..{n}")));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(EngineError::InvalidPartition(format!("player {p} appears twice")));
                }
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(EngineError::InvalidPartition(format!("player {p} is not covered")));
        }
        let mut coalitions = coalitions;
        coalitions.sort();
        Ok(Partition { coalitions, n_players: n })
    }

    /// Partition from a label per player (players sharing a label share a coalition).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (p, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(p);
        }
        let mut coalitions: Vec<Coalition> = groups.into_values().map(Coalition).collect();
        coalitions.sort();
        Partition { coalitions, n_players: labels.len() }
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    /// Index of the coalition containing `player`.
    pub fn index_of(&self, player: usize) -> usize {
        self.coalitions.iter().position(|c| c.contains(player)).unwrap_or_else(|| panic!("player {player} not in partition"))
    }

    pub fn coalition_of(&self, player: usize) -> &Coalition {
        &self.coalitions[self.index_of(player)]
    }

    pub fn max_coalition_size(&self) -> usize {
        self.coalitions.iter().map(Coalition::len).max().unwrap_or(0)
    }

    /// Replaces the coalitions at `remove` with `add`, re-canonicalizing.
    pub(crate) fn replaced(&self, remove: &[usize], add: Vec<Coalition>) -> Partition {
        let mut coalitions: Vec<Coalition> =
            self.coalitions.iter().enumerate().filter(|(k, _)| !remove.contains(k)).map(|(_, c)| c.clone()).collect();
        coalitions.extend(add);
        coalitions.sort();
        Partition { coalitions, n_players: self.n_players }
    }

    /// Canonical text form, e.g. `{0,2}{1}{3}`.
    pub fn canonical_string(&self) -> String {
        self.to_string()
    }

    pub fn canonical_hash(&self) -> u64 {
        fnv1a64(self.canonical_string().as_bytes())
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.coalitions {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// A hedonic game: a player's utility depends only on its own coalition.
///
/// Implementations must be pure; the engine may query the same coalition
/// many times and several runs may share one game across threads.
pub trait Game {
    fn n_players(&self) -> usize;

    fn utility(&self, player: usize, coalition: &Coalition) -> f64;

    /// Singletons must always be feasible.
    fn feasible(&self, coalition: &Coalition) -> bool;
}

impl<G: Game + ?Sized> Game for &G {
    fn n_players(&self) -> usize {
        (**self).n_players()
    }

    fn utility(&self, player: usize, coalition: &Coalition) -> f64 {
        (**self).utility(player, coalition)
    }

    fn feasible(&self, coalition: &Coalition) -> bool {
        (**self).feasible(coalition)
    }
}

/// Sum of all players' utilities under `partition`.
pub fn potential<G: Game + ?Sized>(game: &G, partition: &Partition) -> f64 {
    partition.coalitions().iter().flat_map(|c| c.members().iter().map(move |&p| game.utility(p, c))).sum()
}

/// Utilities indexed by player id.
pub fn utilities<G: Game + ?Sized>(game: &G, partition: &Partition) -> Vec<f64> {
    let mut out = vec![0.0; partition.n_players()];
    for c in partition.coalitions() {
        for &p in c.members() {
            out[p] = game.utility(p, c);
        }
    }
    out
}

/// Every coalition of size two or more is feasible.
pub fn partition_feasible<G: Game + ?Sized>(game: &G, partition: &Partition) -> bool {
    partition.coalitions().iter().all(|c| c.len() < 2 || game.feasible(c))
}
