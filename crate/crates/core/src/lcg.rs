//! Local cooperative channel selection.
//!
//! Each player picks one of `K` channels. Its reward is `1 / (1 + c)` where
//! `c` counts graph neighbors on the same channel, and its utility is its own
//! reward plus its neighbors' rewards. The sum of all rewards is an exact
//! potential for that game.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::rng_from_seed;
use crate::topology::Neighborhood;

/// Margin a best response must clear to count as a strict improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcgState {
    actions: Vec<usize>,
    channels: usize,
}

impl LcgState {
    /// Panics if `channels == 0` or any action is out of range.
    pub fn new(actions: Vec<usize>, channels: usize) -> Self {
        assert!(channels >= 1, "need at least one channel");
        assert!(actions.iter().all(|&a| a < channels), "action out of range");
        LcgState { actions, channels }
    }

    pub fn uniform(n: usize, channel: usize, channels: usize) -> Self {
        Self::new(vec![channel; n], channels)
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn action(&self, player: usize) -> usize {
        self.actions[player]
    }

    pub fn with_action(&self, player: usize, channel: usize) -> LcgState {
        let mut next = self.clone();
        next.actions[player] = channel;
        next
    }

    pub fn set(&mut self, player: usize, channel: usize) {
        assert!(channel < self.channels);
        self.actions[player] = channel;
    }
}

/// `1 / (1 + same-channel neighbors)`.
pub fn reward<N: Neighborhood + ?Sized>(player: usize, state: &LcgState, graph: &N) -> f64 {
    let mine = state.action(player);
    let collisions = graph.neighbors_of(player).iter().filter(|&&j| state.action(j) == mine).count();
    1.0 / (1.0 + collisions as f64)
}

pub fn lcg_utility<N: Neighborhood + ?Sized>(player: usize, state: &LcgState, graph: &N) -> f64 {
    reward(player, state, graph) + graph.neighbors_of(player).iter().map(|&j| reward(j, state, graph)).sum::<f64>()
}

pub fn potential<N: Neighborhood + ?Sized>(state: &LcgState, graph: &N) -> f64 {
    (0..state.actions.len()).map(|i| reward(i, state, graph)).sum()
}

/// No player has a channel raising its utility by more than [`IMPROVEMENT_EPS`].
pub fn is_nash<N: Neighborhood + ?Sized>(state: &LcgState, graph: &N) -> bool {
    (0..state.actions.len()).all(|i| best_response(i, state, graph).is_none())
}

pub fn collision_free<N: Neighborhood + ?Sized>(state: &LcgState, graph: &N) -> bool {
    (0..state.actions.len()).all(|i| graph.neighbors_of(i).iter().all(|&j| state.action(j) != state.action(i)))
}

/// Best channel for `player`, lowest index on ties, if it strictly improves.
pub fn best_response<N: Neighborhood + ?Sized>(player: usize, state: &LcgState, graph: &N) -> Option<usize> {
    let current = lcg_utility(player, state, graph);
    let mut best = (current, state.action(player));
    let mut trial = state.clone();
    for k in 0..state.channels {
        trial.actions[player] = k;
        let u = lcg_utility(player, &trial, graph);
        if u > best.0 + IMPROVEMENT_EPS {
            best = (u, k);
        }
    }
    (best.1 != state.action(player)).then_some(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdMove {
    pub player: usize,
    pub from: usize,
    pub to: usize,
    /// Potential after the move.
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdTrace {
    pub initial_potential: f64,
    pub moves: Vec<BrdMove>,
    pub converged: bool,
}

impl BrdTrace {
    pub fn potentials(&self) -> Vec<f64> {
        std::iter::once(self.initial_potential).chain(self.moves.iter().map(|m| m.potential)).collect()
    }
}

/// Asynchronous best-response dynamics.
///
/// Starts from a seeded uniformly random assignment. Players are visited in
/// a fresh seeded order each sweep and the first one with a strictly better
/// channel moves; a sweep without any mover is a Nash equilibrium. Stops
/// after `max_iters` moves otherwise.
pub fn best_response_dynamics<N: Neighborhood + ?Sized>(
    graph: &N,
    channels: usize,
    seed: u64,
    max_iters: usize,
) -> (LcgState, BrdTrace) {
    assert!(channels >= 1, "need at least one channel");
    let n = graph.len();
    let mut rng = rng_from_seed(seed);
    let mut state = LcgState::new((0..n).map(|_| rng.gen_range(0..channels)).collect(), channels);
    let mut trace = BrdTrace { initial_potential: potential(&state, graph), moves: Vec::new(), converged: false };
    let mut order: Vec<usize> = (0..n).collect();
    loop {
        order.shuffle(&mut rng);
        let step = order.iter().find_map(|&i| best_response(i, &state, graph).map(|k| (i, k)));
        let Some((player, to)) = step else {
            trace.converged = true;
            break;
        };
        if trace.moves.len() >= max_iters {
            break;
        }
        let from = state.action(player);
        state.set(player, to);
        trace.moves.push(BrdMove { player, from, to, potential: potential(&state, graph) });
    }
    (state, trace)
}
