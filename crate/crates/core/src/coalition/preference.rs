use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Absolute tolerance for utility comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Strict improvement: `new` beats `old` by more than [`TOLERANCE`].
pub fn improves(old: f64, new: f64) -> bool {
    new > old + TOLERANCE
}

/// Non-degradation within [`TOLERANCE`].
pub fn not_worse(old: f64, new: f64) -> bool {
    new >= old - TOLERANCE
}

/// Utility changes caused by a single-player move, as `(before, after)` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoveDelta {
    pub mover: (f64, f64),
    /// Players left behind in the origin coalition.
    pub origin_mates: Vec<(f64, f64)>,
    /// Members of the destination coalition (empty for a new singleton).
    pub destination: Vec<(f64, f64)>,
}

/// Decides whether a deviation is acceptable.
///
/// A move is one player switching coalition. A regroup is a merge of two
/// coalitions or a split of one into two; it is given as the `(before,
/// after)` utility pair of every member involved.
pub trait Preference {
    fn approves_move(&self, delta: &MoveDelta) -> bool;

    fn approves_regroup(&self, changes: &[(f64, f64)]) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceOrder {
    /// Nobody affected is hurt and the deviator strictly gains.
    Pareto,
    /// The joint utility of the receiving coalition strictly grows.
    Coalition,
    /// The deviator strictly gains without hurting its new mates.
    Selfish,
}

impl PreferenceOrder {
    pub const ALL: [PreferenceOrder; 3] = [PreferenceOrder::Pareto, PreferenceOrder::Coalition, PreferenceOrder::Selfish];

    pub fn as_str(&self) -> &'static str {
        match self {
            PreferenceOrder::Pareto => "pareto",
            PreferenceOrder::Coalition => "coalition",
            PreferenceOrder::Selfish => "selfish",
        }
    }
}

impl fmt::Display for PreferenceOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PreferenceOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pareto" => Ok(PreferenceOrder::Pareto),
            "coalition" => Ok(PreferenceOrder::Coalition),
            "selfish" => Ok(PreferenceOrder::Selfish),
            other => Err(format!("unknown preference order `{other}`")),
        }
    }
}

fn pareto_regroup(changes: &[(f64, f64)]) -> bool {
    changes.iter().all(|&(o, n)| not_worse(o, n)) && changes.iter().any(|&(o, n)| improves(o, n))
}

impl Preference for PreferenceOrder {
    fn approves_move(&self, d: &MoveDelta) -> bool {
        let (mover_old, mover_new) = d.mover;
        match self {
            PreferenceOrder::Pareto => {
                improves(mover_old, mover_new) && d.origin_mates.iter().chain(&d.destination).all(|&(o, n)| not_worse(o, n))
            }
            PreferenceOrder::Coalition => {
                let before: f64 = d.destination.iter().map(|p| p.0).sum::<f64>() + mover_old;
                let after: f64 = d.destination.iter().map(|p| p.1).sum::<f64>() + mover_new;
                improves(before, after)
            }
            PreferenceOrder::Selfish => improves(mover_old, mover_new) && d.destination.iter().all(|&(o, n)| not_worse(o, n)),
        }
    }

    fn approves_regroup(&self, changes: &[(f64, f64)]) -> bool {
        match self {
            // No single deviator in a merge or split: selfish falls back to pareto.
            PreferenceOrder::Pareto | PreferenceOrder::Selfish => pareto_regroup(changes),
            PreferenceOrder::Coalition => {
                let before: f64 = changes.iter().map(|p| p.0).sum();
                let after: f64 = changes.iter().map(|p| p.1).sum();
                improves(before, after)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unanimous_improvement_passes_every_order() {
        let d = MoveDelta { mover: (0.0, 2.0), origin_mates: vec![(1.0, 1.5)], destination: vec![(3.0, 4.0)] };
        for order in PreferenceOrder::ALL {
            assert!(order.approves_move(&d), "{order}");
        }
    }

    #[test]
    fn harming_an_origin_mate() {
        // Mover +5, origin mate -1, destination unchanged.
        let d = MoveDelta { mover: (0.0, 5.0), origin_mates: vec![(2.0, 1.0)], destination: vec![(1.0, 1.0)] };
        assert!(!PreferenceOrder::Pareto.approves_move(&d));
        assert!(PreferenceOrder::Selfish.approves_move(&d));
        assert!(PreferenceOrder::Coalition.approves_move(&d));

        // Destination aggregate does not grow: coalition order refuses.
        let flat = MoveDelta { mover: (5.0, 5.0), origin_mates: vec![(2.0, 1.0)], destination: vec![(1.0, 1.0)] };
        assert!(!PreferenceOrder::Coalition.approves_move(&flat));
    }

    #[test]
    fn zero_change_rejected_everywhere() {
        let d = MoveDelta { mover: (1.0, 1.0), origin_mates: vec![(1.0, 1.0)], destination: vec![(2.0, 2.0)] };
        for order in PreferenceOrder::ALL {
            assert!(!order.approves_move(&d));
            assert!(!order.approves_regroup(&[(1.0, 1.0), (2.0, 2.0)]));
        }
    }

    #[test]
    fn selfish_protects_destination_only() {
        let hurt_dest = MoveDelta { mover: (0.0, 5.0), origin_mates: vec![], destination: vec![(2.0, 1.0)] };
        assert!(!PreferenceOrder::Selfish.approves_move(&hurt_dest));
        assert!(!PreferenceOrder::Pareto.approves_move(&hurt_dest));
        // Coalition order only looks at the aggregate: 2 + 0 -> 1 + 5.
        assert!(PreferenceOrder::Coalition.approves_move(&hurt_dest));
    }

    #[test]
    fn coalition_order_may_let_mover_lose() {
        let d = MoveDelta { mover: (3.0, 2.0), origin_mates: vec![], destination: vec![(1.0, 4.0)] };
        assert!(PreferenceOrder::Coalition.approves_move(&d));
        assert!(!PreferenceOrder::Selfish.approves_move(&d));
    }

    #[test]
    fn regroup_tests() {
        let gain_all = [(1.0, 2.0), (1.0, 1.0)];
        let trade_off = [(1.0, 4.0), (2.0, 1.0)];
        assert!(PreferenceOrder::Pareto.approves_regroup(&gain_all));
        assert!(PreferenceOrder::Selfish.approves_regroup(&gain_all));
        assert!(!PreferenceOrder::Pareto.approves_regroup(&trade_off));
        assert!(!PreferenceOrder::Selfish.approves_regroup(&trade_off));
        assert!(PreferenceOrder::Coalition.approves_regroup(&trade_off));
    }

    #[test]
    fn tolerance_semantics() {
        assert!(!improves(1.0, 1.0 + 1e-12));
        assert!(not_worse(1.0, 1.0 - 1e-12));
        assert!(!not_worse(1.0, 1.0 - 1e-6));
    }

    #[test]
    fn parse_and_display() {
        for order in PreferenceOrder::ALL {
            assert_eq!(order.to_string().parse::<PreferenceOrder>().unwrap(), order);
        }
        assert!("nash".parse::<PreferenceOrder>().is_err());
    }
}
