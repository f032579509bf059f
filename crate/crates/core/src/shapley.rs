//! Shapley-value division of coalition costs.
//!
//! [`shapley_exact`] evaluates the permutation average through the
//! equivalent subset-weight sum, touching each of the 2^n subsets once.
//! [`shapley_montecarlo`] averages marginal contributions over seeded random
//! orderings and scales to any coalition size.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::rng_from_seed;

/// Largest coalition handled by exact enumeration.
pub const EXACT_MAX_PLAYERS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapleyError {
    #[error("exact Shapley supports at most {max} players, got {got}; use the Monte Carlo estimator")]
    TooManyPlayers { got: usize, max: usize },
    #[error("value of the empty coalition must be 0, got {0}")]
    NonZeroEmpty(f64),
    #[error("sample count must be at least 1")]
    NoSamples,
}

/// A transferable-utility game over an ordered member list. The value oracle
/// receives a subset of member ids in member-list order.
pub struct TuGame<F> {
    members: Vec<usize>,
    value: F,
}

impl<F: Fn(&[usize]) -> f64> TuGame<F> {
    pub fn new(members: Vec<usize>, value: F) -> Result<Self, ShapleyError> {
        let empty = value(&[]);
        if empty != 0.0 {
            return Err(ShapleyError::NonZeroEmpty(empty));
        }
        Ok(TuGame { members, value })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn value(&self, subset: &[usize]) -> f64 {
        (self.value)(subset)
    }

    fn value_of_mask(&self, mask: u64, buf: &mut Vec<usize>) -> f64 {
        buf.clear();
        buf.extend(self.members.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &p)| p));
        (self.value)(buf)
    }
}

/// Share per player id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation(BTreeMap<usize, f64>);

impl Allocation {
    pub fn get(&self, player: usize) -> Option<f64> {
        self.0.get(&player).copied()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0.iter().map(|(&p, &v)| (p, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// max - min over the shares; 0 for an empty allocation.
    pub fn range(&self) -> f64 {
        let max = self.0.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.0.values().copied().fold(f64::INFINITY, f64::min);
        if self.0.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    /// Largest absolute per-player difference against `other`.
    pub fn max_abs_diff(&self, other: &Allocation) -> f64 {
        self.0.iter().map(|(p, v)| (v - other.get(*p).unwrap_or(f64::NAN)).abs()).fold(0.0, f64::max)
    }
}

impl FromIterator<(usize, f64)> for Allocation {
    fn from_iter<I: IntoIterator<Item = (usize, f64)>>(iter: I) -> Self {
        Allocation(iter.into_iter().collect())
    }
}

/// Exact Shapley value.
///
/// phi_i = sum over S not containing i of |S|! (n-|S|-1)! / n! * (v(S+i) - v(S)),
/// which is the mean marginal contribution of i over all n! orderings.
pub fn shapley_exact<F: Fn(&[usize]) -> f64>(game: &TuGame<F>) -> Result<Allocation, ShapleyError> {
    let n = game.members.len();
    if n > EXACT_MAX_PLAYERS {
        return Err(ShapleyError::TooManyPlayers { got: n, max: EXACT_MAX_PLAYERS });
    }
    let mut buf = Vec::with_capacity(n);
    let values: Vec<f64> = (0..(1u64 << n)).map(|mask| game.value_of_mask(mask, &mut buf)).collect();

    // Integer ordering counts s! (n-s-1)!; the n! division happens once per player.
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1]).collect();

    let mut phi = vec![0.0; n];
    for mask in 0..(1u64 << n) {
        let size = mask.count_ones() as usize;
        for (k, share) in phi.iter_mut().enumerate() {
            let bit = 1u64 << k;
            if mask & bit == 0 {
                *share += weight[size] * (values[(mask | bit) as usize] - values[mask as usize]);
            }
        }
    }
    Ok(game.members.iter().copied().zip(phi.into_iter().map(|x| x / fact[n])).collect())
}

/// Seeded Monte Carlo estimate over `samples` uniformly random orderings.
///
/// Each ordering's marginals telescope to v(N), so the estimate is
/// efficient for every sample count. Subset values are memoized for the
/// duration of the call when the coalition fits in a 128-bit mask.
pub fn shapley_montecarlo<F: Fn(&[usize]) -> f64>(
    game: &TuGame<F>,
    samples: usize,
    seed: u64,
) -> Result<Allocation, ShapleyError> {
    if samples == 0 {
        return Err(ShapleyError::NoSamples);
    }
    let n = game.members.len();
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    let mut memo: HashMap<u128, f64> = HashMap::new();
    let mut prefix: Vec<usize> = Vec::with_capacity(n);
    let mut eval = |prefix_idx: &[usize], mask: u128| -> f64 {
        let compute = || {
            let mut ids: Vec<usize> = prefix_idx.to_vec();
            ids.sort_unstable();
            let subset: Vec<usize> = ids.into_iter().map(|k| game.members[k]).collect();
            (game.value)(&subset)
        };
        if n <= 128 {
            *memo.entry(mask).or_insert_with(compute)
        } else {
            compute()
        }
    };
    for _ in 0..samples {
        order.shuffle(&mut rng);
        prefix.clear();
        let mut mask = 0u128;
        let mut before = 0.0;
        for &k in &order {
            prefix.push(k);
            if n <= 128 {
                mask |= 1u128 << k;
            }
            let after = eval(&prefix, mask);
            sums[k] += after - before;
            before = after;
        }
    }
    let scale = samples as f64;
    Ok(game.members.iter().copied().zip(sums.into_iter().map(|s| s / scale)).collect())
}
