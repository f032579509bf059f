use std::collections::BTreeSet;

use super::dynamics::is_stable;
use super::preference::Preference;
use super::{partition_feasible, EngineError, Game, Partition};
use crate::topology::Neighborhood;

/// Largest player count the brute-force scan accepts (Bell(10) = 115975).
pub const ORACLE_MAX_PLAYERS: usize = 10;

/// Bell numbers via the Bell triangle.
pub fn bell_number(n: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &x in &row {
            let prev = *next.last().unwrap();
            next.push(prev + x);
        }
        row = next;
    }
    row[0]
}

/// Iterator over all set partitions of `0..n` as restricted growth strings
/// (`labels[0] = 0`, `labels[i] <= 1 + max(labels[..i])`), in lexicographic order.
pub fn set_partitions(n: usize) -> SetPartitions {
    SetPartitions { labels: vec![0; n], maxes: vec![0; n], done: false }
}

pub struct SetPartitions {
    labels: Vec<usize>,
    // maxes[i] = max(labels[..=i])
    maxes: Vec<usize>,
    done: bool,
}

impl Iterator for SetPartitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let current = self.labels.clone();
        let n = self.labels.len();
        // Advance: rightmost position that may still grow.
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.labels[i] <= self.maxes[i - 1] {
                self.labels[i] += 1;
                self.maxes[i] = self.maxes[i - 1].max(self.labels[i]);
                for j in (i + 1)..n {
                    self.labels[j] = 0;
                    self.maxes[j] = self.maxes[i];
                }
                break;
            }
        }
        Some(current)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub stable: BTreeSet<Partition>,
    /// Candidate partitions examined (the Bell number of the player count).
    pub scanned: u64,
    /// Candidates whose coalitions were all feasible.
    pub feasible: u64,
}

/// Every feasible partition that [`is_stable`] accepts.
pub fn enumerate_stable_partitions<G, N, P>(game: &G, graph: &N, pref: &P) -> Result<OracleReport, EngineError>
where
    G: Game + ?Sized,
    N: Neighborhood + ?Sized,
    P: Preference + ?Sized,
{
    let n = game.n_players();
    if n > ORACLE_MAX_PLAYERS {
        return Err(EngineError::TooManyPlayers { got: n, max: ORACLE_MAX_PLAYERS });
    }
    let mut report = OracleReport { stable: BTreeSet::new(), scanned: 0, feasible: 0 };
    for labels in set_partitions(n) {
        report.scanned += 1;
        let partition = Partition::from_labels(&labels);
        if !partition_feasible(game, &partition) {
            continue;
        }
        report.feasible += 1;
        if is_stable(game, graph, &partition, pref) {
            report.stable.insert(partition);
        }
    }
    Ok(report)
}
