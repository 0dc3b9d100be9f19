//! Derived quantities of a run and the identities they must satisfy.
//!
//! * `z_i = x_i / y_i`, `zbar = mean(z_i)`, `<z> = (1/n) sum_i y_i z_i = mean(x_i)`.
//! * `S(t)` with `s_ij = w_ij y_j(t) / y_i(t+1)` is row stochastic and
//!   `y(t)^T = y(t+1)^T S(t)`.
//! * Backward products `W(t) ... W(tau)` approach rank one `v 1^T`
//!   geometrically.
//! * The ergodic averages obey closed-form gap bounds, see [`bounds`].

mod bounds;

pub use bounds::{
    bound_rhs_fixed, bound_rhs_time_varying, gap_vs_bound_report, BoundParams, BoundTarget, FixedHorizonCheck,
    GapReport, GapRow, TimeVaryingBound, CONTRACTION_C, ORACLE_BUDGET,
};

use serde::Serialize;
use thiserror::Error;

use crate::engine::NetworkState;
use crate::weights::{MixingSchedule, WeightMatrix, WeightsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("bound undefined for degenerate mu = 0 (single agent)")]
    DegenerateMu,
    #[error("bound constants are not representable in double precision (n*L = {0})")]
    Unrepresentable(usize),
    #[error("bound needs a subgradient bound G")]
    MissingG,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("y(t+1) entry {} is {value}, must be positive", index + 1)]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("vector length {got} does not match matrix size {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("rate fit needs at least 3 horizons, got {0}")]
    InsufficientHorizons(usize),
    #[error("rate fit has fewer than 2 horizons with positive gaps")]
    TooFewPositiveGaps,
    #[error("end step {end} precedes start step {start}")]
    BadRange { start: u64, end: u64 },
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

/// `zbar = (1/n) sum_i z_i`.
pub fn z_bar(state: &NetworkState) -> Vec<f64> {
    let n = state.n() as f64;
    let mut acc = vec![0.0; state.dim()];
    for a in &state.agents {
        for (s, x) in acc.iter_mut().zip(&a.x) {
            *s += x / a.y;
        }
    }
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// `<z> = (1/n) sum_i y_i z_i`, computed as the mean of the `x_i`.
pub fn bracket_z(state: &NetworkState) -> Vec<f64> {
    let n = state.n() as f64;
    let mut acc = vec![0.0; state.dim()];
    for a in &state.agents {
        for (s, x) in acc.iter_mut().zip(&a.x) {
            *s += x;
        }
    }
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// `max_i ||z_i - zbar||`.
pub fn consensus_radius(state: &NetworkState) -> f64 {
    let zb = z_bar(state);
    state
        .agents
        .iter()
        .map(|a| a.x.iter().zip(&zb).map(|(x, m)| (x / a.y - m).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `S(t)` as rows: `s_ij = w_ij y_j(t) / y_i(t+1)`.
pub fn s_matrix(w: &WeightMatrix, y_t: &[f64], y_t1: &[f64]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let n = w.n();
    for len in [y_t.len(), y_t1.len()] {
        if len != n {
            return Err(AnalysisError::Dimension { expected: n, got: len });
        }
    }
    if let Some(index) = y_t1.iter().position(|&v| !(v > 0.0)) {
        return Err(AnalysisError::NonPositiveWeight { index, value: y_t1[index] });
    }
    Ok((0..n).map(|i| (0..n).map(|j| w.get(i, j) * y_t[j] / y_t1[i]).collect()).collect())
}

/// `||y(t)^T - y(t+1)^T S(t)||_inf`.
pub fn check_absolute_probability(w: &WeightMatrix, y_t: &[f64], y_t1: &[f64]) -> Result<f64, AnalysisError> {
    let s = s_matrix(w, y_t, y_t1)?;
    let n = w.n();
    Ok((0..n)
        .map(|j| {
            let back: f64 = (0..n).map(|i| y_t1[i] * s[i][j]).sum();
            (y_t[j] - back).abs()
        })
        .fold(0.0, f64::max))
}

/// `max_ij |[W(end) ... W(start)]_ij - v_i|` with `v` the row means of the product.
pub fn product_gap(mixing: &MixingSchedule, start: u64, end: u64) -> Result<f64, AnalysisError> {
    if end < start {
        return Err(AnalysisError::BadRange { start, end });
    }
    Ok(*product_gaps(mixing, start, end - start)?.last().expect("at least lag 0"))
}

/// [`product_gap`] for every lag `0..=max_lag` from a fixed `start`.
pub fn product_gaps(mixing: &MixingSchedule, start: u64, max_lag: u64) -> Result<Vec<f64>, AnalysisError> {
    let mut product = mixing.matrix_at(start)?;
    let mut gaps = Vec::with_capacity(max_lag as usize + 1);
    gaps.push(rank_one_gap(&product));
    for lag in 1..=max_lag {
        product = mixing.matrix_at(start + lag)?.matmul(&product);
        gaps.push(rank_one_gap(&product));
    }
    Ok(gaps)
}

fn rank_one_gap(m: &WeightMatrix) -> f64 {
    let n = m.n();
    (0..n)
        .map(|i| {
            let row = m.row(i);
            let v = row.iter().sum::<f64>() / n as f64;
            row.iter().map(|x| (x - v).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Running stepsize-weighted average `sum alpha(tau) w(tau) / sum alpha(tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAverage {
    weighted: Vec<f64>,
    weight: f64,
}

impl ErgodicAverage {
    pub fn new(dim: usize) -> Self {
        Self { weighted: vec![0.0; dim], weight: 0.0 }
    }

    pub fn push(&mut self, alpha: f64, point: &[f64]) {
        for (acc, v) in self.weighted.iter_mut().zip(point) {
            *acc += alpha * v;
        }
        self.weight += alpha;
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn point(&self) -> Vec<f64> {
        self.weighted.iter().map(|v| v / self.weight).collect()
    }
}

/// `sum_tau alpha(tau) points(tau) / sum_tau alpha(tau)` over the given prefix.
pub fn ergodic_point(points: &[Vec<f64>], alphas: &[f64]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let mut avg = ErgodicAverage::new(dim);
    for (p, &a) in points.iter().zip(alphas) {
        avg.push(a, p);
    }
    avg.point()
}

/// Least-squares fit of `log10(gap)` against `log10(T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Horizons left out because their gap was not positive.
    pub excluded: Vec<f64>,
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::InsufficientHorizons(points.len()));
    }
    let (used, excluded): (Vec<_>, Vec<_>) = points.iter().partition(|(_, gap)| *gap > 0.0);
    if used.len() < 2 {
        return Err(AnalysisError::TooFewPositiveGaps);
    }
    let xs: Vec<f64> = used.iter().map(|(t, _)| t.log10()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, g)| g.log10()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateFit { slope, intercept: my - slope * mx, excluded: excluded.into_iter().map(|(t, _)| t).collect() })
}
