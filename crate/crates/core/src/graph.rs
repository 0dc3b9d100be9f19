//! Time-varying directed graphs with mandatory self-loops.
//!
//! Vertices are 0-based internally. Serialized forms (config files, run
//! summaries) use 1-based vertex ids, the way agents are usually labeled.
//!
//! An arc `(j, i)` means `j` is an in-neighbor of `i`: information flows
//! from `j` to `i`.

use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("arc ({from}, {to}) has an endpoint outside 1..={n}")]
    ArcOutOfRange { from: usize, to: usize, n: usize },
    #[error("graph has {got} vertices, schedule expects {expected}")]
    VertexCountMismatch { expected: usize, got: usize },
    #[error("arc probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("connectivity window {window} is shorter than the agent count {n}")]
    WindowTooShort { window: usize, n: usize },
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("periodic schedule needs at least one graph")]
    EmptyPeriod,
}

/// A directed graph on `n` vertices that always contains every self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    arcs: BTreeSet<(usize, usize)>,
}

impl Digraph {
    /// Builds a graph from 0-based arcs. Self-loops are inserted for every
    /// vertex whether or not they are listed.
    pub fn new(n: usize, arcs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (from, to) in arcs {
            if from >= n || to >= n {
                return Err(GraphError::ArcOutOfRange { from: from + 1, to: to + 1, n });
            }
            set.insert((from, to));
        }
        Ok(Self { n, arcs: set })
    }

    /// Builds a graph from 1-based arcs, as written in config files.
    pub fn from_one_based(
        n: usize,
        arcs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let mut zero_based = Vec::new();
        for (from, to) in arcs {
            if from == 0 || to == 0 {
                return Err(GraphError::ArcOutOfRange { from, to, n });
            }
            zero_based.push((from - 1, to - 1));
        }
        Self::new(n, zero_based)
    }

    /// Only self-loops.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        Self::new(n, std::iter::empty())
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        Self::new(n, (0..n).flat_map(|j| (0..n).map(move |i| (j, i))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All arcs `(from, to)`, self-loops included, in lexicographic order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.arcs.contains(&(from, to))
    }

    /// In-neighbor set of `i` (agents that send to `i`), including `i`.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_arc(j, i)).collect()
    }

    /// Out-neighbor set of `j` (agents that receive from `j`), including `j`.
    pub fn out_neighbors(&self, j: usize) -> Vec<usize> {
        self.arcs.range((j, 0)..(j + 1, 0)).map(|&(_, to)| to).collect()
    }

    pub fn out_degree(&self, j: usize) -> usize {
        self.arcs.range((j, 0)..(j + 1, 0)).count()
    }

    /// Graph on the same vertex set whose arc set is the union of both.
    pub fn union(&self, other: &Digraph) -> Result<Digraph, GraphError> {
        if self.n != other.n {
            return Err(GraphError::VertexCountMismatch { expected: self.n, got: other.n });
        }
        let mut arcs = self.arcs.clone();
        arcs.extend(other.arcs.iter().copied());
        Ok(Digraph { n: self.n, arcs })
    }

    /// Arcs as 1-based pairs.
    pub fn one_based_arcs(&self) -> Vec<[usize; 2]> {
        self.arcs.iter().map(|&(f, t)| [f + 1, t + 1]).collect()
    }

    fn reaches_all(&self, reverse: bool) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(from, to) in &self.arcs {
            if reverse {
                adj[to].push(from);
            } else {
                adj[from].push(to);
            }
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }
}

#[derive(Serialize, Deserialize)]
struct DigraphRepr {
    n: usize,
    arcs: Vec<[usize; 2]>,
}

impl Serialize for Digraph {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DigraphRepr { n: self.n, arcs: self.one_based_arcs() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Digraph {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DigraphRepr::deserialize(deserializer)?;
        Digraph::from_one_based(repr.n, repr.arcs.into_iter().map(|[f, t]| (f, t)))
            .map_err(serde::de::Error::custom)
    }
}

/// True iff every vertex reaches every other vertex along directed arcs.
///
/// One forward and one backward traversal from vertex 0.
pub fn is_strongly_connected(g: &Digraph) -> bool {
    g.reaches_all(false) && g.reaches_all(true)
}

#[derive(Debug, Clone, PartialEq)]
enum Generator {
    Static(Digraph),
    Periodic(Vec<Digraph>),
    RingRotation,
    Random { p: f64, seed: u64 },
}

/// A deterministic map from integer time steps to graphs on a fixed vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    n: usize,
    generator: Generator,
    claimed_window: usize,
}

impl GraphSchedule {
    /// The same graph at every step. Period 1.
    pub fn fixed(graph: Digraph, claimed_window: usize) -> Result<Self, GraphError> {
        if claimed_window == 0 {
            return Err(GraphError::ZeroWindow);
        }
        Ok(Self { n: graph.n(), generator: Generator::Static(graph), claimed_window })
    }

    /// Cycles through `graphs`; the graph at `t` is `graphs[t % len]`.
    pub fn periodic(graphs: Vec<Digraph>, claimed_window: usize) -> Result<Self, GraphError> {
        if claimed_window == 0 {
            return Err(GraphError::ZeroWindow);
        }
        let n = graphs.first().ok_or(GraphError::EmptyPeriod)?.n();
        if let Some(g) = graphs.iter().find(|g| g.n() != n) {
            return Err(GraphError::VertexCountMismatch { expected: n, got: g.n() });
        }
        Ok(Self { n, generator: Generator::Periodic(graphs), claimed_window })
    }

    /// Self-loops plus the single arc `(t mod n) -> ((t + 1) mod n)` at step `t`.
    ///
    /// No single step is strongly connected for `n >= 2`, but any `n`
    /// consecutive steps cover the whole directed cycle.
    pub fn ring_rotation(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        Ok(Self { n, generator: Generator::RingRotation, claimed_window: n })
    }

    /// Each non-self arc is present independently with probability `p` at each
    /// step, and the ring-rotation arc for the step is always added, so every
    /// window of `window >= n` steps has a strongly connected union.
    pub fn random(n: usize, p: f64, seed: u64, window: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::BadProbability(p));
        }
        if window < n {
            return Err(GraphError::WindowTooShort { window, n });
        }
        Ok(Self { n, generator: Generator::Random { p, seed }, claimed_window: window })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Window length `L` the schedule claims to be uniformly strongly connected with.
    pub fn claimed_window(&self) -> usize {
        self.claimed_window
    }

    pub fn period(&self) -> Option<usize> {
        match &self.generator {
            Generator::Static(_) => Some(1),
            Generator::Periodic(graphs) => Some(graphs.len()),
            Generator::RingRotation => Some(self.n),
            Generator::Random { .. } => None,
        }
    }

    pub fn graph_at(&self, t: u64) -> Digraph {
        let n = self.n;
        match &self.generator {
            Generator::Static(g) => g.clone(),
            Generator::Periodic(graphs) => graphs[(t % graphs.len() as u64) as usize].clone(),
            Generator::RingRotation => ring_graph(n, t),
            Generator::Random { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(t);
                let mut arcs = Vec::new();
                for from in 0..n {
                    for to in 0..n {
                        if from != to && rng.gen_bool(*p) {
                            arcs.push((from, to));
                        }
                    }
                }
                let ring = ring_graph(n, t);
                Digraph::new(n, arcs.into_iter().chain(ring.arcs())).expect("arcs in range")
            }
        }
    }
}

fn ring_graph(n: usize, t: u64) -> Digraph {
    let from = (t % n as u64) as usize;
    let to = ((t + 1) % n as u64) as usize;
    Digraph::new(n, [(from, to)]).expect("ring arc in range")
}

/// Union of the graphs at steps `t, t + 1, ..., t + window - 1`.
pub fn union_graph(schedule: &GraphSchedule, t: u64, window: usize) -> Digraph {
    let mut acc = schedule.graph_at(t);
    for k in 1..window as u64 {
        let g = schedule.graph_at(t + k);
        acc.arcs.extend(g.arcs);
    }
    acc
}

/// Outcome of a uniform strong connectivity check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certification {
    pub connected: bool,
    /// `None` when the check covers the whole (periodic) schedule; otherwise
    /// the last step covered by a checked window.
    pub certified_through: Option<u64>,
    /// First window start whose union is not strongly connected.
    pub first_failure: Option<u64>,
}

/// Checks every window `[t, t + window)`; for periodic schedules the starts
/// `0..period` suffice, otherwise starts `0..=horizon - window` are checked and
/// the result only holds up to `horizon`.
pub fn certify_uniform_strong_connectivity(
    schedule: &GraphSchedule,
    window: usize,
    horizon: u64,
) -> Certification {
    if window == 0 {
        return Certification { connected: false, certified_through: Some(0), first_failure: Some(0) };
    }
    let (starts, through) = match schedule.period() {
        Some(p) => (p as u64, None),
        None if horizon < window as u64 => {
            return Certification { connected: false, certified_through: Some(0), first_failure: None };
        }
        None => (horizon - window as u64 + 1, Some(horizon)),
    };
    for t in 0..starts {
        if !is_strongly_connected(&union_graph(schedule, t, window)) {
            return Certification { connected: false, certified_through: through, first_failure: Some(t) };
        }
    }
    Certification { connected: true, certified_through: through, first_failure: None }
}

pub fn verify_uniform_strong_connectivity(schedule: &GraphSchedule, window: usize, horizon: u64) -> bool {
    certify_uniform_strong_connectivity(schedule, window, horizon).connected
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g1(n: usize, arcs: &[(usize, usize)]) -> Digraph {
        Digraph::from_one_based(n, arcs.iter().copied()).unwrap()
    }

    #[test]
    fn self_loops_always_present() {
        let g = g1(3, &[(1, 2)]);
        for i in 0..3 {
            assert!(g.has_arc(i, i));
        }
        assert_eq!(g.arc_count(), 4);
        assert_eq!(g.out_neighbors(0), vec![0, 1]);
        assert_eq!(g.in_neighbors(1), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_arcs() {
        assert!(matches!(Digraph::new(0, []), Err(GraphError::Empty)));
        assert!(matches!(g1_err(2, &[(1, 3)]), Err(GraphError::ArcOutOfRange { .. })));
        assert!(matches!(g1_err(2, &[(0, 1)]), Err(GraphError::ArcOutOfRange { .. })));
    }

    fn g1_err(n: usize, arcs: &[(usize, usize)]) -> Result<Digraph, GraphError> {
        Digraph::from_one_based(n, arcs.iter().copied())
    }

    #[test]
    fn strong_connectivity_examples() {
        assert!(is_strongly_connected(&g1(1, &[(1, 1)])));
        assert!(is_strongly_connected(&g1(3, &[(1, 2), (2, 3), (3, 1)])));
        assert!(!is_strongly_connected(&g1(2, &[(1, 2)])));
    }

    #[test]
    fn union_examples() {
        let s = GraphSchedule::ring_rotation(3).unwrap();
        assert_eq!(union_graph(&s, 2, 1), s.graph_at(2));

        let s = GraphSchedule::periodic(vec![g1(2, &[(1, 2)]), g1(2, &[(2, 1)])], 2).unwrap();
        assert_eq!(union_graph(&s, 0, 2), g1(2, &[(1, 2), (2, 1)]));

        let ring4 = GraphSchedule::ring_rotation(4).unwrap();
        let u = union_graph(&ring4, 0, 4);
        for (f, t) in [(1, 2), (2, 3), (3, 4), (4, 1)] {
            assert!(u.has_arc(f - 1, t - 1));
        }
        assert_eq!(u.arc_count(), 8);
    }

    #[test]
    fn ring_rotation_formula() {
        let s = GraphSchedule::ring_rotation(3).unwrap();
        assert_eq!(s.graph_at(0), g1(3, &[(1, 2)]));
        assert_eq!(s.graph_at(1), g1(3, &[(2, 3)]));
        assert_eq!(s.graph_at(2), g1(3, &[(3, 1)]));
        assert_eq!(s.graph_at(3), s.graph_at(0));
        assert_eq!(s.period(), Some(3));
        assert_eq!(s.claimed_window(), 3);
        assert!(verify_uniform_strong_connectivity(&s, 3, 3));

        let one = GraphSchedule::ring_rotation(1).unwrap();
        assert_eq!(one.graph_at(5), g1(1, &[(1, 1)]));
    }

    #[test]
    fn uniform_connectivity_examples() {
        let stat = GraphSchedule::fixed(g1(3, &[(1, 2), (2, 3), (3, 1)]), 1).unwrap();
        for l in 1..4 {
            assert!(verify_uniform_strong_connectivity(&stat, l, 10));
        }
        let ring = GraphSchedule::ring_rotation(4).unwrap();
        assert!(verify_uniform_strong_connectivity(&ring, 4, 4));
        assert!(!verify_uniform_strong_connectivity(&ring, 1, 4));
        assert!(!verify_uniform_strong_connectivity(&ring, 3, 4));

        let one_way = GraphSchedule::periodic(vec![g1(2, &[(1, 2)]), g1(2, &[(1, 2)])], 1).unwrap();
        for l in 1..6 {
            assert!(!verify_uniform_strong_connectivity(&one_way, l, 10));
        }
    }

    #[test]
    fn random_schedule_is_patched_and_reproducible() {
        let zero = GraphSchedule::random(4, 0.0, 9, 4).unwrap();
        let ring = GraphSchedule::ring_rotation(4).unwrap();
        for t in 0..12 {
            assert_eq!(zero.graph_at(t), ring.graph_at(t));
        }
        let full = GraphSchedule::random(4, 1.0, 9, 4).unwrap();
        assert_eq!(full.graph_at(3), Digraph::complete(4).unwrap());

        let a = GraphSchedule::random(6, 0.3, 42, 8).unwrap();
        let b = GraphSchedule::random(6, 0.3, 42, 8).unwrap();
        let c = GraphSchedule::random(6, 0.3, 43, 8).unwrap();
        let mut differs = false;
        for t in 0..50 {
            assert_eq!(a.graph_at(t), b.graph_at(t));
            differs |= a.graph_at(t) != c.graph_at(t);
        }
        assert!(differs);
        assert_eq!(a.period(), None);
        let cert = certify_uniform_strong_connectivity(&a, 8, 200);
        assert!(cert.connected);
        assert_eq!(cert.certified_through, Some(200));

        assert!(GraphSchedule::random(4, 0.5, 1, 3).is_err());
        assert!(GraphSchedule::random(4, 1.5, 1, 4).is_err());
    }

    #[test]
    fn ring_rotation_exhaustive_up_to_eight() {
        for n in 1..=8 {
            let s = GraphSchedule::ring_rotation(n).unwrap();
            for horizon in [n as u64, 3 * n as u64] {
                assert!(verify_uniform_strong_connectivity(&s, n, horizon), "n={n}");
            }
            if n >= 2 {
                assert!(!verify_uniform_strong_connectivity(&s, n - 1, 10));
            }
        }
    }

    #[test]
    fn non_periodic_horizon_shorter_than_window_is_not_certified() {
        let s = GraphSchedule::random(3, 0.5, 1, 5).unwrap();
        let cert = certify_uniform_strong_connectivity(&s, 5, 4);
        assert!(!cert.connected);
    }

    #[test]
    fn serde_uses_one_based_ids() {
        let g = g1(2, &[(1, 2)]);
        let repr = DigraphRepr { n: 2, arcs: g.one_based_arcs() };
        assert_eq!(repr.arcs, vec![[1, 1], [1, 2], [2, 2]]);
    }

    proptest! {
        #[test]
        fn union_is_monotone_in_window(n in 1usize..6, p in 0.0f64..1.0, seed in any::<u64>(), t in 0u64..50, l in 1usize..6) {
            let s = GraphSchedule::random(n, p, seed, n.max(1)).unwrap();
            let small = union_graph(&s, t, l);
            let big = union_graph(&s, t, l + 1);
            for arc in small.arcs() {
                prop_assert!(big.has_arc(arc.0, arc.1));
            }
        }

        #[test]
        fn every_generated_graph_has_self_loops(n in 1usize..8, p in 0.0f64..1.0, seed in any::<u64>(), t in 0u64..1000) {
            let s = GraphSchedule::random(n, p, seed, n).unwrap();
            let g = s.graph_at(t);
            for i in 0..n {
                prop_assert!(g.has_arc(i, i));
            }
        }
    }
}
