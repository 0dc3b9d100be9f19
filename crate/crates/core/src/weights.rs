//! Per-step mixing matrices `W(t)`.
//!
//! Entry `(i, j)` is the weight agent `j` puts on the message it sends to
//! agent `i`. A valid matrix is column stochastic, has positive diagonal and
//! a zero pattern that matches the graph of the step exactly.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Digraph, GraphSchedule};

/// Tolerance for row and column sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightsError {
    #[error("weight matrix is {got}x{got}, expected {expected}x{expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight matrix rows are ragged or empty")]
    Ragged,
    #[error("no custom weight matrix for step {0}")]
    MissingMatrix(u64),
    #[error("custom weight matrix at step {step}: {violation}")]
    Invalid { step: u64, violation: Assumption1Violation },
}

/// Dense `n x n` weight matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightMatrix {
    n: usize,
    entries: Vec<f64>,
    beta: f64,
}

impl WeightMatrix {
    /// Wraps rows without validating them; see [`validate_assumption1`].
    pub fn from_rows(rows: &[Vec<f64>], beta: f64) -> Result<Self, WeightsError> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(WeightsError::Ragged);
        }
        Ok(Self { n, entries: rows.concat(), beta })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries, beta: 1.0 }
    }

    /// Every entry `1/n`: the complete graph with uniform weights.
    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / n as f64;
        Self { n, entries: vec![w; n * n], beta: w }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.n + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// `W v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).iter().zip(v).map(|(w, x)| w * x).sum()).collect()
    }

    /// `self * rhs`.
    pub fn matmul(&self, rhs: &WeightMatrix) -> WeightMatrix {
        assert_eq!(self.n, rhs.n, "dimension mismatch in matmul");
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * rhs.get(k, j);
                }
            }
        }
        WeightMatrix { n, entries, beta: self.beta.min(rhs.beta) }
    }
}

/// Why a matrix fails the weight assumption for a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Assumption1Violation {
    /// Nonzero weight on a pair that is not an arc, or zero weight on an arc.
    Support { row: usize, col: usize, value: f64 },
    BelowBeta { row: usize, col: usize, value: f64, beta: f64 },
    ColumnSum { col: usize, sum: f64 },
    NonFinite { row: usize, col: usize },
}

impl fmt::Display for Assumption1Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Support { row, col, value } => write!(
                f,
                "Assumption 1 violated: entry ({}, {}) = {value} does not match the graph support",
                row + 1,
                col + 1
            ),
            Self::BelowBeta { row, col, value, beta } => write!(
                f,
                "Assumption 1 violated: entry ({}, {}) = {value} is below beta = {beta}",
                row + 1,
                col + 1
            ),
            Self::ColumnSum { col, sum } => {
                write!(f, "Assumption 1 violated: column {} sums to {sum}, not 1", col + 1)
            }
            Self::NonFinite { row, col } => {
                write!(f, "Assumption 1 violated: entry ({}, {}) is not finite", row + 1, col + 1)
            }
        }
    }
}

/// `w_ij = 1 / |out-neighbors of j|` on every arc `(j, i)`, zero elsewhere.
pub fn build_out_degree_weights(g: &Digraph) -> WeightMatrix {
    let n = g.n();
    let mut w = WeightMatrix { n, entries: vec![0.0; n * n], beta: 1.0 / n as f64 };
    for j in 0..n {
        let share = 1.0 / g.out_degree(j) as f64;
        for i in g.out_neighbors(j) {
            w.set(i, j, share);
        }
    }
    w
}

/// First violation of the weight assumption, if any.
pub fn assumption1_violation(
    w: &WeightMatrix,
    g: &Digraph,
    beta: f64,
) -> Result<Option<Assumption1Violation>, WeightsError> {
    if w.n() != g.n() {
        return Err(WeightsError::DimensionMismatch { expected: g.n(), got: w.n() });
    }
    let n = w.n();
    for i in 0..n {
        for j in 0..n {
            let value = w.get(i, j);
            if !value.is_finite() {
                return Ok(Some(Assumption1Violation::NonFinite { row: i, col: j }));
            }
            if g.has_arc(j, i) {
                if value <= 0.0 {
                    return Ok(Some(Assumption1Violation::Support { row: i, col: j, value }));
                }
                if value < beta {
                    return Ok(Some(Assumption1Violation::BelowBeta { row: i, col: j, value, beta }));
                }
            } else if value != 0.0 {
                return Ok(Some(Assumption1Violation::Support { row: i, col: j, value }));
            }
        }
    }
    for j in 0..n {
        let sum = w.column_sum(j);
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Ok(Some(Assumption1Violation::ColumnSum { col: j, sum }));
        }
    }
    Ok(None)
}

/// True iff `w` matches the arcs of `g` exactly, every supported entry is at
/// least `beta`, and every column sums to one.
pub fn validate_assumption1(w: &WeightMatrix, g: &Digraph, beta: f64) -> Result<bool, WeightsError> {
    Ok(assumption1_violation(w, g, beta)?.is_none())
}

/// Column stochastic with every row also summing to one.
pub fn is_doubly_stochastic(w: &WeightMatrix) -> bool {
    (0..w.n()).all(|k| {
        (w.column_sum(k) - 1.0).abs() <= STOCHASTIC_TOL && (w.row_sum(k) - 1.0).abs() <= STOCHASTIC_TOL
    })
}

/// How the matrix for each step is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    OutDegree,
    /// Explicit matrices keyed by step. For periodic graph schedules keys
    /// are taken modulo the period.
    Custom { beta: f64, matrices: BTreeMap<u64, WeightMatrix> },
}

/// A graph schedule together with the rule that turns each graph into `W(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSchedule {
    graphs: GraphSchedule,
    rule: WeightRule,
}

impl MixingSchedule {
    pub fn new(graphs: GraphSchedule, rule: WeightRule) -> Self {
        Self { graphs, rule }
    }

    pub fn out_degree(graphs: GraphSchedule) -> Self {
        Self::new(graphs, WeightRule::OutDegree)
    }

    pub fn graphs(&self) -> &GraphSchedule {
        &self.graphs
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    pub fn n(&self) -> usize {
        self.graphs.n()
    }

    /// Lower bound the rule promises for supported entries.
    pub fn beta(&self) -> f64 {
        match &self.rule {
            WeightRule::OutDegree => 1.0 / self.n() as f64,
            WeightRule::Custom { beta, .. } => *beta,
        }
    }

    pub fn graph_at(&self, t: u64) -> Digraph {
        self.graphs.graph_at(t)
    }

    /// `W(t)`, not validated.
    pub fn matrix_at(&self, t: u64) -> Result<WeightMatrix, WeightsError> {
        match &self.rule {
            WeightRule::OutDegree => Ok(build_out_degree_weights(&self.graphs.graph_at(t))),
            WeightRule::Custom { matrices, .. } => {
                let key = match self.graphs.period() {
                    Some(p) => t % p as u64,
                    None => t,
                };
                let w = matrices.get(&key).ok_or(WeightsError::MissingMatrix(t))?;
                if w.n() != self.n() {
                    return Err(WeightsError::DimensionMismatch { expected: self.n(), got: w.n() });
                }
                Ok(w.clone())
            }
        }
    }

    /// Validates every matrix the run will use: one period for periodic
    /// schedules, otherwise steps `0..horizon`.
    pub fn validate(&self, horizon: u64) -> Result<(), WeightsError> {
        if matches!(self.rule, WeightRule::OutDegree) {
            return Ok(());
        }
        let steps = match self.graphs.period() {
            Some(p) => p as u64,
            None => horizon,
        };
        for t in 0..steps {
            let w = self.matrix_at(t)?;
            if let Some(violation) = assumption1_violation(&w, &self.graph_at(t), self.beta())? {
                return Err(WeightsError::Invalid { step: t, violation });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(n: usize, arcs: &[(usize, usize)]) -> Digraph {
        Digraph::from_one_based(n, arcs.iter().copied()).unwrap()
    }

    #[test]
    fn out_degree_two_agent_example() {
        let g = g1(2, &[(1, 2)]);
        let w = build_out_degree_weights(&g);
        assert_eq!(w.rows(), vec![vec![0.5, 0.0], vec![0.5, 1.0]]);
        assert_eq!(w.beta(), 0.5);
        assert!(validate_assumption1(&w, &g, 0.5).unwrap());
        assert!(!is_doubly_stochastic(&w));
    }

    #[test]
    fn out_degree_complete_and_single() {
        let w = build_out_degree_weights(&Digraph::complete(4).unwrap());
        assert!(w.rows().iter().flatten().all(|&x| x == 0.25));
        assert!(is_doubly_stochastic(&w));
        let one = build_out_degree_weights(&Digraph::empty(1).unwrap());
        assert_eq!(one.rows(), vec![vec![1.0]]);
    }

    #[test]
    fn validation_failures() {
        let g = g1(2, &[(1, 2)]);
        let bad_sum = WeightMatrix::from_rows(&[vec![0.4, 0.0], vec![0.5, 1.0]], 0.1).unwrap();
        assert!(!validate_assumption1(&bad_sum, &g, 0.1).unwrap());
        assert!(matches!(
            assumption1_violation(&bad_sum, &g, 0.1).unwrap(),
            Some(Assumption1Violation::ColumnSum { col: 0, .. })
        ));

        let off_support = WeightMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]], 0.1).unwrap();
        assert!(matches!(
            assumption1_violation(&off_support, &g, 0.1).unwrap(),
            Some(Assumption1Violation::Support { row: 0, col: 1, .. })
        ));

        let small = WeightMatrix::from_rows(&[vec![0.95, 0.0], vec![0.05, 1.0]], 0.1).unwrap();
        assert!(matches!(
            assumption1_violation(&small, &g, 0.1).unwrap(),
            Some(Assumption1Violation::BelowBeta { .. })
        ));

        let three = WeightMatrix::identity(3);
        assert!(matches!(
            validate_assumption1(&three, &g, 0.1),
            Err(WeightsError::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(WeightMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0]], 0.1).is_err());
    }

    #[test]
    fn doubly_stochastic_examples() {
        assert!(is_doubly_stochastic(&WeightMatrix::uniform(5)));
        assert!(is_doubly_stochastic(&WeightMatrix::identity(3)));
    }

    #[test]
    fn out_degree_valid_over_random_schedules() {
        for seed in 0..20 {
            let s = GraphSchedule::random(6, 0.35, seed, 6).unwrap();
            for t in 0..40 {
                let g = s.graph_at(t);
                let w = build_out_degree_weights(&g);
                assert!(validate_assumption1(&w, &g, 1.0 / 6.0).unwrap());
            }
        }
    }

    #[test]
    fn products_stay_column_stochastic() {
        let s = MixingSchedule::out_degree(GraphSchedule::random(7, 0.2, 3, 7).unwrap());
        let mut prod = s.matrix_at(0).unwrap();
        for t in 1..100 {
            prod = s.matrix_at(t).unwrap().matmul(&prod);
            for j in 0..7 {
                assert!((prod.column_sum(j) - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn custom_matrices_keyed_modulo_period() {
        let graphs = GraphSchedule::ring_rotation(2).unwrap();
        let w0 = WeightMatrix::from_rows(&[vec![0.5, 0.0], vec![0.5, 1.0]], 0.5).unwrap();
        let w1 = WeightMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 0.5]], 0.5).unwrap();
        let rule = WeightRule::Custom { beta: 0.5, matrices: BTreeMap::from([(0, w0.clone()), (1, w1)]) };
        let s = MixingSchedule::new(graphs, rule);
        assert_eq!(s.matrix_at(4).unwrap(), w0);
        assert!(s.validate(10).is_ok());

        let bad = WeightMatrix::from_rows(&[vec![0.4, 0.0], vec![0.5, 1.0]], 0.4).unwrap();
        let rule = WeightRule::Custom { beta: 0.4, matrices: BTreeMap::from([(0, bad)]) };
        let s = MixingSchedule::new(GraphSchedule::ring_rotation(2).unwrap(), rule);
        match s.validate(10) {
            Err(WeightsError::Invalid { violation, .. }) => {
                assert!(violation.to_string().contains("Assumption 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
