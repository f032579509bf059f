//! Geometric network model: node placement, radius connectivity and
//! induced-subgraph queries used as coalition feasibility.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("intensity must be a finite non-negative number, got {0}")]
    BadIntensity(f64),
    #[error("radius must be a finite non-negative number, got {0}")]
    BadRadius(f64),
    #[error("area must have strictly positive finite width and height, got {0}x{1}")]
    DegenerateArea(f64, f64),
    #[error("node {id} at ({x}, {y}) lies outside the {w}x{h} area")]
    OutOfArea { id: usize, x: f64, y: f64, w: f64, h: f64 },
    #[error("kind list has {kinds} entries but there are {positions} positions")]
    KindCount { kinds: usize, positions: usize },
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("coalition must have at least one member")]
    EmptyMembers,
    #[error("node ids must be dense 0..n-1; found id {found} at index {index}")]
    SparseIds { index: usize, found: usize },
    #[error("malformed graph fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    User,
    SmallCell,
    MacroBs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(rename = "pos")]
    pub position: (f64, f64),
}

/// Rectangle `[0, width] x [0, height]` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn new(width: f64, height: f64) -> Result<Self, TopologyError> {
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(TopologyError::DegenerateArea(width, height));
        }
        Ok(Area { width, height })
    }

    pub fn size(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        (0.0..=self.width).contains(&x) && (0.0..=self.height).contains(&y)
    }
}

/// Anything that can report the graph neighbors of a player.
///
/// The coalition engine only needs adjacency, so scenarios whose cooperation
/// graph is not geometric (e.g. a conflict complement) can plug in an
/// [`AdjacencyList`].
pub trait Neighborhood {
    fn len(&self) -> usize;
    fn neighbors_of(&self, id: usize) -> &[usize];

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors_of(a).binary_search(&b).is_ok()
    }
}

/// Plain sorted adjacency lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjacencyList {
    adj: Vec<Vec<usize>>,
}

impl AdjacencyList {
    /// Builds a symmetric, irreflexive adjacency from an edge predicate.
    pub fn from_fn(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if edge(i, j) {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        AdjacencyList { adj }
    }
}

impl Neighborhood for AdjacencyList {
    fn len(&self) -> usize {
        self.adj.len()
    }

    fn neighbors_of(&self, id: usize) -> &[usize] {
        &self.adj[id]
    }
}

/// Radius graph over placed nodes. Edges are always derived from positions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    area: Area,
    radius: f64,
    seed: u64,
    adj: AdjacencyList,
}

fn check_radius(radius: f64) -> Result<(), TopologyError> {
    if radius.is_finite() && radius >= 0.0 {
        Ok(())
    } else {
        Err(TopologyError::BadRadius(radius))
    }
}

fn within(a: (f64, f64), b: (f64, f64), radius: f64) -> bool {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt() <= radius
}

/// Poisson(mean) by sequential inversion. Large means are split into
/// chunks of at most 500 so `exp(-mean)` never underflows; a sum of
/// independent Poisson variables is Poisson with the summed mean.
pub fn sample_poisson(rng: &mut SimRng, mean: f64) -> u64 {
    const CHUNK: f64 = 500.0;
    let mut remaining = mean;
    let mut total = 0;
    while remaining > 0.0 {
        let lambda = remaining.min(CHUNK);
        remaining -= lambda;
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            // Guard against the tail losing all mass to rounding.
            if p == 0.0 && cdf < u {
                break;
            }
        }
        total += k;
    }
    total
}

impl NetworkGraph {
    /// Homogeneous Poisson point process over `area`.
    pub fn generate_ppp(intensity: f64, area: Area, radius: f64, kind: NodeKind, seed: u64) -> Result<Self, TopologyError> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(TopologyError::BadIntensity(intensity));
        }
        check_radius(radius)?;
        Area::new(area.width, area.height)?;
        let mut rng = rng_from_seed(seed);
        let count = sample_poisson(&mut rng, intensity * area.size()) as usize;
        let positions = uniform_positions(&mut rng, count, area);
        Ok(Self::assemble(positions, vec![kind; count], area, radius, seed))
    }

    /// Exactly `count` i.i.d. uniform nodes: a Poisson process conditioned on
    /// its node count. Scenarios with a prescribed number of players use this.
    pub fn generate_uniform(count: usize, area: Area, radius: f64, kind: NodeKind, seed: u64) -> Result<Self, TopologyError> {
        check_radius(radius)?;
        Area::new(area.width, area.height)?;
        let mut rng = rng_from_seed(seed);
        let positions = uniform_positions(&mut rng, count, area);
        Ok(Self::assemble(positions, vec![kind; count], area, radius, seed))
    }

    /// Graph over explicit positions. Duplicate coordinates are allowed.
    pub fn generate_fixed(positions: &[(f64, f64)], area: Area, radius: f64, kinds: &[NodeKind]) -> Result<Self, TopologyError> {
        check_radius(radius)?;
        Area::new(area.width, area.height)?;
        if kinds.len() != positions.len() {
            return Err(TopologyError::KindCount { kinds: kinds.len(), positions: positions.len() });
        }
        for (id, &(x, y)) in positions.iter().enumerate() {
            if !area.contains((x, y)) {
                return Err(TopologyError::OutOfArea { id, x, y, w: area.width, h: area.height });
            }
        }
        Ok(Self::assemble(positions.to_vec(), kinds.to_vec(), area, radius, 0))
    }

    fn assemble(positions: Vec<(f64, f64)>, kinds: Vec<NodeKind>, area: Area, radius: f64, seed: u64) -> Self {
        let nodes: Vec<Node> =
            positions.into_iter().zip(kinds).enumerate().map(|(id, (position, kind))| Node { id, kind, position }).collect();
        let adj = AdjacencyList::from_fn(nodes.len(), |i, j| within(nodes[i].position, nodes[j].position, radius));
        NetworkGraph { nodes, area, radius, seed, adj }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sorted edge list `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, list) in self.adj.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn mean_degree(&self) -> f64 {
        if self.nodes.is_empty() {
            0.0
        } else {
            2.0 * self.edge_count() as f64 / self.nodes.len() as f64
        }
    }

    pub fn neighbors(&self, id: usize) -> Result<&[usize], TopologyError> {
        if id >= self.nodes.len() {
            return Err(TopologyError::UnknownNode(id));
        }
        Ok(self.adj.neighbors_of(id))
    }

    /// Whether the subgraph induced by `members` is connected.
    pub fn coalition_feasible(&self, members: &[usize]) -> Result<bool, TopologyError> {
        if members.is_empty() {
            return Err(TopologyError::EmptyMembers);
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= self.nodes.len()) {
            return Err(TopologyError::UnknownNode(bad));
        }
        Ok(induced_connected(&self.adj, members))
    }

    /// Hop count between `a` and `b` using only nodes in `within`.
    /// `None` means unreachable inside the induced subgraph.
    pub fn hop_distance(&self, a: usize, b: usize, within: &[usize]) -> Option<usize> {
        induced_hop_distance(&self.adj, a, b, within)
    }
}

impl Neighborhood for NetworkGraph {
    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn neighbors_of(&self, id: usize) -> &[usize] {
        self.adj.neighbors_of(id)
    }
}

fn uniform_positions(rng: &mut SimRng, count: usize, area: Area) -> Vec<(f64, f64)> {
    (0..count).map(|_| (rng.gen::<f64>() * area.width, rng.gen::<f64>() * area.height)).collect()
}

/// Connectivity of the subgraph induced by `members` (ids need not be sorted).
pub fn induced_connected<N: Neighborhood + ?Sized>(graph: &N, members: &[usize]) -> bool {
    if members.len() <= 1 {
        return true;
    }
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut seen = vec![false; sorted.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(k) = queue.pop_front() {
        for nb in graph.neighbors_of(sorted[k]) {
            if let Ok(pos) = sorted.binary_search(nb) {
                if !seen[pos] {
                    seen[pos] = true;
                    reached += 1;
                    queue.push_back(pos);
                }
            }
        }
    }
    reached == sorted.len()
}

pub fn induced_hop_distance<N: Neighborhood + ?Sized>(graph: &N, a: usize, b: usize, within: &[usize]) -> Option<usize> {
    if a == b {
        return Some(0);
    }
    let mut sorted = within.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let start = sorted.binary_search(&a).ok()?;
    let goal = sorted.binary_search(&b).ok()?;
    let mut dist = vec![usize::MAX; sorted.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(k) = queue.pop_front() {
        for nb in graph.neighbors_of(sorted[k]) {
            if let Ok(pos) = sorted.binary_search(nb) {
                if dist[pos] == usize::MAX {
                    dist[pos] = dist[k] + 1;
                    if pos == goal {
                        return Some(dist[pos]);
                    }
                    queue.push_back(pos);
                }
            }
        }
    }
    None
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFixture {
    area: [f64; 2],
    radius: f64,
    nodes: Vec<Node>,
}

impl NetworkGraph {
    /// JSON fixture form. Edges are not serialized.
    pub fn to_json(&self) -> String {
        let fixture = GraphFixture { area: [self.area.width, self.area.height], radius: self.radius, nodes: self.nodes.clone() };
        serde_json::to_string(&fixture).expect("graph fixture serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TopologyError> {
        let fixture: GraphFixture = serde_json::from_str(text).map_err(|e| TopologyError::Fixture(e.to_string()))?;
        for (index, node) in fixture.nodes.iter().enumerate() {
            if node.id != index {
                return Err(TopologyError::SparseIds { index, found: node.id });
            }
        }
        let area = Area::new(fixture.area[0], fixture.area[1])?;
        let positions: Vec<_> = fixture.nodes.iter().map(|n| n.position).collect();
        let kinds: Vec<_> = fixture.nodes.iter().map(|n| n.kind).collect();
        Self::generate_fixed(&positions, area, fixture.radius, &kinds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn area100() -> Area {
        Area::new(100.0, 100.0).unwrap()
    }

    fn path3() -> NetworkGraph {
        NetworkGraph::generate_fixed(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], area100(), 1.5, &[NodeKind::User; 3]).unwrap()
    }

    #[test]
    fn zero_intensity_gives_empty_graph() {
        for seed in 0..20 {
            let g = NetworkGraph::generate_ppp(0.0, area100(), 10.0, NodeKind::User, seed).unwrap();
            assert_eq!(g.node_count(), 0);
        }
    }

    #[test]
    fn ppp_count_matches_poisson_moments() {
        let counts: Vec<f64> = (0..1000u64)
            .map(|seed| NetworkGraph::generate_ppp(0.01, area100(), 0.0, NodeKind::User, seed).unwrap().node_count() as f64)
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        assert!((90.0..=110.0).contains(&mean), "mean {mean}");
        assert!((80.0..=120.0).contains(&var), "variance {var}");
    }

    #[test]
    fn poisson_large_mean_is_chunked() {
        let mut rng = rng_from_seed(1);
        let draws: Vec<f64> = (0..200).map(|_| sample_poisson(&mut rng, 2000.0) as f64).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 2000.0).abs() < 15.0, "mean {mean}");
    }

    #[test]
    fn zero_radius_has_no_edges() {
        let g = NetworkGraph::generate_ppp(0.02, area100(), 0.0, NodeKind::SmallCell, 4).unwrap();
        assert!(g.node_count() > 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn invalid_generation_parameters() {
        assert_eq!(
            NetworkGraph::generate_ppp(-1.0, area100(), 1.0, NodeKind::User, 0).unwrap_err(),
            TopologyError::BadIntensity(-1.0)
        );
        assert_eq!(
            NetworkGraph::generate_ppp(1.0, area100(), -2.0, NodeKind::User, 0).unwrap_err(),
            TopologyError::BadRadius(-2.0)
        );
        assert!(matches!(Area::new(0.0, 5.0), Err(TopologyError::DegenerateArea(..))));
        let degenerate = Area { width: 10.0, height: 0.0 };
        assert!(NetworkGraph::generate_ppp(1.0, degenerate, 1.0, NodeKind::User, 0).is_err());
    }

    #[test]
    fn fixed_positions() {
        let g = path3();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2)]);

        let empty = NetworkGraph::generate_fixed(&[], area100(), 1.0, &[]).unwrap();
        assert_eq!(empty.node_count(), 0);

        let dup = NetworkGraph::generate_fixed(&[(0.0, 0.0), (0.0, 0.0)], area100(), 1.0, &[NodeKind::User; 2]).unwrap();
        assert_eq!(dup.edges(), vec![(0, 1)]);

        let err = NetworkGraph::generate_fixed(&[(101.0, 0.0)], area100(), 1.0, &[NodeKind::User]).unwrap_err();
        assert!(matches!(err, TopologyError::OutOfArea { id: 0, .. }));
    }

    #[test]
    fn neighbor_queries() {
        let g = path3();
        assert_eq!(g.neighbors(1).unwrap(), &[0, 2]);
        assert_eq!(g.neighbors(7), Err(TopologyError::UnknownNode(7)));

        let iso = NetworkGraph::generate_fixed(&[(0.0, 0.0), (50.0, 50.0)], area100(), 1.0, &[NodeKind::User; 2]).unwrap();
        assert!(iso.neighbors(0).unwrap().is_empty());

        let tri =
            NetworkGraph::generate_fixed(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)], area100(), 1.5, &[NodeKind::User; 3]).unwrap();
        assert_eq!(tri.neighbors(0).unwrap(), &[1, 2]);
    }

    #[test]
    fn feasibility_is_induced_connectivity() {
        let g = path3();
        for i in 0..3 {
            assert!(g.coalition_feasible(&[i]).unwrap());
        }
        assert!(!g.coalition_feasible(&[0, 2]).unwrap());
        assert!(g.coalition_feasible(&[0, 1, 2]).unwrap());
        assert_eq!(g.coalition_feasible(&[]), Err(TopologyError::EmptyMembers));

        // Star: hub 0 with leaves 1 and 2.
        let star =
            NetworkGraph::generate_fixed(&[(5.0, 5.0), (4.0, 5.0), (6.0, 5.0)], area100(), 1.0, &[NodeKind::User; 3]).unwrap();
        assert!(!star.coalition_feasible(&[1, 2]).unwrap());
        assert!(star.coalition_feasible(&[0, 1, 2]).unwrap());
    }

    #[test]
    fn hop_distances() {
        let g = path3();
        assert_eq!(g.hop_distance(1, 1, &[1]), Some(0));
        assert_eq!(g.hop_distance(0, 2, &[0, 1, 2]), Some(2));
        assert_eq!(g.hop_distance(0, 2, &[0, 2]), None);
    }

    #[test]
    fn json_round_trip_rederives_edges() {
        let g = NetworkGraph::generate_ppp(0.005, area100(), 20.0, NodeKind::User, 11).unwrap();
        let back = NetworkGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        assert_eq!(back.edges(), g.edges());
        assert!(!g.to_json().contains("edges"));

        let text = r#"{"area":[10,10],"radius":2,"nodes":[{"id":0,"kind":"small-cell","pos":[1,1]},{"id":1,"kind":"macro-bs","pos":[2,1]}]}"#;
        let parsed = NetworkGraph::from_json(text).unwrap();
        assert_eq!(parsed.nodes()[1].kind, NodeKind::MacroBs);
        assert_eq!(parsed.edges(), vec![(0, 1)]);

        let sparse = r#"{"area":[10,10],"radius":2,"nodes":[{"id":3,"kind":"user","pos":[1,1]}]}"#;
        assert!(matches!(NetworkGraph::from_json(sparse), Err(TopologyError::SparseIds { .. })));
    }

    fn small_graph() -> impl Strategy<Value = (Vec<(f64, f64)>, f64)> {
        (prop::collection::vec((0.0..20.0f64, 0.0..20.0f64), 1..9), 0.0..12.0f64)
    }

    proptest! {
        #[test]
        fn adjacency_symmetric_and_exact((pos, r) in small_graph()) {
            let g = NetworkGraph::generate_fixed(&pos, Area::new(20.0, 20.0).unwrap(), r, &vec![NodeKind::User; pos.len()]).unwrap();
            for i in 0..pos.len() {
                prop_assert!(!g.adjacent(i, i));
                for j in 0..pos.len() {
                    prop_assert_eq!(g.adjacent(i, j), g.adjacent(j, i));
                    if i != j {
                        prop_assert_eq!(g.adjacent(i, j), within(pos[i], pos[j], r));
                    }
                }
            }
        }

        #[test]
        fn ppp_is_deterministic(seed in any::<u64>()) {
            let a = NetworkGraph::generate_ppp(0.003, area100(), 15.0, NodeKind::User, seed).unwrap();
            let b = NetworkGraph::generate_ppp(0.003, area100(), 15.0, NodeKind::User, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn feasibility_monotone_under_larger_radius((pos, r) in small_graph(), extra in 0.0..10.0f64, mask in 1u32..512) {
            let n = pos.len();
            let area = Area::new(20.0, 20.0).unwrap();
            let kinds = vec![NodeKind::User; n];
            let g = NetworkGraph::generate_fixed(&pos, area, r, &kinds).unwrap();
            let denser = NetworkGraph::generate_fixed(&pos, area, r + extra, &kinds).unwrap();
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            prop_assume!(!members.is_empty());
            if g.coalition_feasible(&members).unwrap() {
                prop_assert!(denser.coalition_feasible(&members).unwrap());
            }
        }

        #[test]
        fn hop_triangle_inequality((pos, r) in small_graph(), mask in 1u32..512) {
            let n = pos.len();
            let g = NetworkGraph::generate_fixed(&pos, Area::new(20.0, 20.0).unwrap(), r, &vec![NodeKind::User; n]).unwrap();
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            for &a in &members {
                for &b in &members {
                    for &c in &members {
                        if let (Some(ab), Some(bc)) = (g.hop_distance(a, b, &members), g.hop_distance(b, c, &members)) {
                            let ac = g.hop_distance(a, c, &members).expect("reachable through b");
                            prop_assert!(ac <= ab + bc);
                        }
                    }
                }
            }
        }
    }
}
