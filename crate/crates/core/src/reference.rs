//! Dense, self-contained forms of the algorithms the heterogeneous
//! iteration reduces to. They share nothing with [`crate::engine`] beyond
//! the objective and matrix types, and are used to cross-check it.
//!
//! Sums over `j` run in increasing order starting from `0.0`, the same
//! order the engine aggregates incoming messages in, so agreement is
//! expected to the last bit.

use crate::objectives::{Component, ObjectiveSet};
use crate::weights::WeightMatrix;

fn grads_at(points: &[Vec<f64>], scale: Option<&[f64]>, objectives: &ObjectiveSet) -> Vec<Vec<f64>> {
    objectives
        .components()
        .iter()
        .enumerate()
        .map(|(j, f)| match scale {
            Some(y) => f.subgradient(&points[j].iter().map(|v| v / y[j]).collect::<Vec<_>>()),
            None => f.subgradient(&points[j]),
        })
        .collect()
}

fn mix_y(w: &WeightMatrix, y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                let wij = w.get(i, j);
                if wij != 0.0 {
                    acc += wij * y[j];
                }
            }
            acc
        })
        .collect()
}

/// Step first, then push: `x_i <- sum_j w_ij (x_j - alpha g_j(x_j / y_j))`, `y <- W y`.
pub fn subgradient_push_step(
    x: &[Vec<f64>],
    y: &[f64],
    w: &WeightMatrix,
    alpha: f64,
    objectives: &ObjectiveSet,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = grads_at(x, Some(y), objectives);
    (combine_stepped(x, &g, w, alpha), mix_y(w, y))
}

/// Push first, then step: `x_i <- sum_j w_ij x_j - alpha g_i(x_i / y_i)`, `y <- W y`.
pub fn push_subgradient_step(
    x: &[Vec<f64>],
    y: &[f64],
    w: &WeightMatrix,
    alpha: f64,
    objectives: &ObjectiveSet,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let g = grads_at(x, Some(y), objectives);
    (combine_then_step(x, &g, w, alpha), mix_y(w, y))
}

/// Average-consensus form with doubly stochastic `W`, adapt then combine:
/// `x_i <- sum_j w_ij (x_j - alpha g_j(x_j))`.
pub fn adapt_then_combine(x: &[Vec<f64>], w: &WeightMatrix, alpha: f64, objectives: &ObjectiveSet) -> Vec<Vec<f64>> {
    let g = grads_at(x, None, objectives);
    combine_stepped(x, &g, w, alpha)
}

/// Average-consensus form with doubly stochastic `W`, combine then adapt:
/// `x_i <- sum_j w_ij x_j - alpha g_i(x_i)`.
pub fn combine_then_adapt(x: &[Vec<f64>], w: &WeightMatrix, alpha: f64, objectives: &ObjectiveSet) -> Vec<Vec<f64>> {
    let g = grads_at(x, None, objectives);
    combine_then_step(x, &g, w, alpha)
}

fn combine_stepped(x: &[Vec<f64>], g: &[Vec<f64>], w: &WeightMatrix, alpha: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = vec![0.0; x[i].len()];
            for j in 0..n {
                let wij = w.get(i, j);
                if wij == 0.0 {
                    continue;
                }
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += wij * (x[j][k] - alpha * g[j][k]);
                }
            }
            acc
        })
        .collect()
}

fn combine_then_step(x: &[Vec<f64>], g: &[Vec<f64>], w: &WeightMatrix, alpha: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = vec![0.0; x[i].len()];
            for j in 0..n {
                let wij = w.get(i, j);
                if wij == 0.0 {
                    continue;
                }
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += wij * x[j][k];
                }
            }
            for (a, gi) in acc.iter_mut().zip(&g[i]) {
                *a -= alpha * gi;
            }
            acc
        })
        .collect()
}

/// Single-agent subgradient method `x(t+1) = x(t) - alpha(t) g(x(t))`;
/// returns `x(0), ..., x(T)`.
pub fn subgradient_descent(f: &Component, x0: &[f64], alphas: impl IntoIterator<Item = f64>) -> Vec<Vec<f64>> {
    let mut path = vec![x0.to_vec()];
    for alpha in alphas {
        let x = path.last().expect("path starts non-empty");
        let g = f.subgradient(x);
        let next = x.iter().zip(&g).map(|(v, gk)| v - alpha * gk).collect();
        path.push(next);
    }
    path
}
