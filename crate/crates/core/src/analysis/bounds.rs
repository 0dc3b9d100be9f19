//! Closed-form upper bounds on the ergodic optimality gap.
//!
//! With `eta = n^{-nL}` and `mu = (1 - eta)^{1/L}`, the gap of the
//! stepsize-weighted average of `zbar` (or of one agent's `z_k`) is bounded
//! by four terms: a centralized subgradient term, an initial-spread term, a
//! term decaying with `mu^tau` from the initial states, and a consensus
//! term scaled by `32 n G^2 / (eta mu (1 - mu))`. Every series is summed
//! term by term in increasing `tau`.
//!
//! The constants are worst case. For `n = 5, L = 5` already `eta ~ 3e-18`
//! and `1 - mu ~ 7e-19`, so `1 - mu` is computed as `-expm1(ln1p(-eta) / L)`
//! rather than by subtraction.

use serde::Serialize;

use super::AnalysisError;
use crate::engine::{RunTrace, StepSchedule};
use crate::objectives::{norm, ObjectiveSet};

/// `c` in the product contraction `|[W(t)...W(tau)]_ij - v_i| <= c mu^{t - tau}`.
pub const CONTRACTION_C: f64 = 4.0;

/// Slack added to every gap comparison for the resolution of the optimum oracle.
pub const ORACLE_BUDGET: f64 = 1e-6;

/// Which ergodic average a bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTarget {
    /// Average of `zbar`.
    Average,
    /// Average of agent `k`'s `z_k` (0-based).
    Agent(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundParams {
    pub n: usize,
    pub window: usize,
    /// Uniform subgradient bound `G`.
    pub g: f64,
    pub eta: f64,
    pub mu: f64,
    ln_mu: f64,
    pub one_minus_mu: f64,
    pub c: f64,
    /// `sum_i ||x_i(0)||`.
    pub sum_x0_norm: f64,
    pub zbar0: Vec<f64>,
    /// `z_i(0) = x_i(0)`.
    pub z0: Vec<Vec<f64>>,
    pub z_star: Vec<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl BoundParams {
    /// `initial` holds `x_i(0)`; since `y_i(0) = 1` these are also `z_i(0)`.
    pub fn new(n: usize, window: usize, g: f64, initial: &[Vec<f64>], z_star: Vec<f64>) -> Self {
        let exponent = (n * window) as f64;
        let eta = (n as f64).powf(-exponent);
        let ln_mu = (-eta).ln_1p() / window as f64;
        let mu = ln_mu.exp();
        let one_minus_mu = -ln_mu.exp_m1();
        let d = z_star.len();
        let mut zbar0 = vec![0.0; d];
        for x in initial {
            for (s, v) in zbar0.iter_mut().zip(x) {
                *s += v;
            }
        }
        zbar0.iter_mut().for_each(|v| *v /= n as f64);
        Self {
            n,
            window,
            g,
            eta,
            mu,
            ln_mu,
            one_minus_mu,
            c: CONTRACTION_C,
            sum_x0_norm: initial.iter().map(|x| norm(x)).sum(),
            zbar0,
            z0: initial.to_vec(),
            z_star,
        }
    }

    /// `mu^e` for a real exponent, evaluated in log space.
    pub fn mu_pow(&self, e: f64) -> f64 {
        if e == 0.0 {
            1.0
        } else if self.mu == 0.0 {
            0.0
        } else {
            (e * self.ln_mu).exp()
        }
    }

    /// `c mu^lag`.
    pub fn contraction_bound(&self, lag: u64) -> f64 {
        self.c * self.mu_pow(lag as f64)
    }

    /// Errors when the bound expressions cannot be evaluated.
    pub fn check_defined(&self) -> Result<(), AnalysisError> {
        if self.mu == 0.0 {
            return Err(AnalysisError::DegenerateMu);
        }
        let denom = self.eta * self.mu * self.one_minus_mu;
        if !denom.is_normal() {
            return Err(AnalysisError::Unrepresentable(self.n * self.window));
        }
        Ok(())
    }

    fn consensus_coefficient(&self) -> f64 {
        32.0 * self.n as f64 * self.g * self.g / (self.eta * self.mu * self.one_minus_mu)
    }

    fn initial_coefficient(&self) -> f64 {
        32.0 * self.g * self.sum_x0_norm / self.eta
    }

    fn start_distance_sq(&self) -> f64 {
        dist(&self.zbar0, &self.z_star).powi(2)
    }

    /// `sum_i ||zbar(0) - z_i(0)||`, plus `||z_k(0) - z_i(0)||` for an agent target.
    fn spread(&self, target: BoundTarget) -> f64 {
        self.z0
            .iter()
            .map(|zi| {
                let own = dist(&self.zbar0, zi);
                match target {
                    BoundTarget::Average => own,
                    BoundTarget::Agent(k) => own + dist(&self.z0[k], zi),
                }
            })
            .sum()
    }

    /// Coefficient in front of the spread sum: `2G` for the average, `G` per agent.
    fn spread_coefficient(&self, target: BoundTarget) -> f64 {
        match target {
            BoundTarget::Average => 2.0 * self.g,
            BoundTarget::Agent(_) => self.g,
        }
    }
}

/// Bound for the fixed stepsize `alpha = 1/sqrt(T)` on the plain average
/// over `tau = 0..T-1`.
pub fn bound_rhs_fixed(p: &BoundParams, horizon: u64, target: BoundTarget) -> Result<f64, AnalysisError> {
    p.check_defined()?;
    if horizon == 0 {
        return Err(AnalysisError::ZeroHorizon);
    }
    let t = horizon as f64;
    let sqrt_t = t.sqrt();
    let n = p.n as f64;
    let centralized = (p.start_distance_sq() + p.g * p.g) / (2.0 * sqrt_t);
    let spread = p.spread_coefficient(target) * p.spread(target) / (n * t);
    let initial = p.initial_coefficient() / (p.one_minus_mu * t);
    let consensus = p.consensus_coefficient() / sqrt_t;
    Ok(centralized + spread + initial + consensus)
}

/// Bound at step `t` for a stepsize sequence, summing every series directly.
pub fn bound_rhs_time_varying(
    p: &BoundParams,
    schedule: &StepSchedule,
    t: u64,
    target: BoundTarget,
) -> Result<f64, AnalysisError> {
    p.check_defined()?;
    let alpha = |tau: u64| schedule.alpha(tau);
    let alpha0 = alpha(0);

    let mut sum_alpha = 0.0;
    let mut sum_alpha_sq = 0.0;
    for tau in 0..=t {
        let a = alpha(tau);
        sum_alpha += a;
        sum_alpha_sq += a * a;
    }
    let mut decay = 0.0;
    for tau in 0..t {
        decay += alpha(tau) * p.mu_pow(tau as f64);
    }
    let mut mixing = 0.0;
    for tau in 0..t {
        mixing += alpha(tau) * (alpha0 * p.mu_pow(tau as f64 / 2.0) + alpha(tau.div_ceil(2)));
    }
    Ok(assemble(p, target, alpha0, sum_alpha, sum_alpha_sq, decay, mixing))
}

fn assemble(
    p: &BoundParams,
    target: BoundTarget,
    alpha0: f64,
    sum_alpha: f64,
    sum_alpha_sq: f64,
    decay: f64,
    mixing: f64,
) -> f64 {
    let n = p.n as f64;
    let centralized = (p.start_distance_sq() + p.g * p.g * sum_alpha_sq) / (2.0 * sum_alpha);
    let spread = p.spread_coefficient(target) * alpha0 * p.spread(target) / (n * sum_alpha);
    let initial = p.initial_coefficient() * decay / sum_alpha;
    let consensus = p.consensus_coefficient() * mixing / sum_alpha;
    centralized + spread + initial + consensus
}

/// Incremental form of [`bound_rhs_time_varying`] for consecutive `t`; the
/// partial sums are accumulated in the same order, so values agree exactly.
#[derive(Debug, Clone)]
pub struct TimeVaryingBound<'a> {
    params: &'a BoundParams,
    schedule: StepSchedule,
    t: u64,
    alpha0: f64,
    sum_alpha: f64,
    sum_alpha_sq: f64,
    decay: f64,
    mixing: f64,
}

impl<'a> TimeVaryingBound<'a> {
    /// Positioned at `t = 0`.
    pub fn new(params: &'a BoundParams, schedule: StepSchedule) -> Result<Self, AnalysisError> {
        params.check_defined()?;
        let alpha0 = schedule.alpha(0);
        Ok(Self {
            params,
            schedule,
            t: 0,
            alpha0,
            sum_alpha: alpha0,
            sum_alpha_sq: alpha0 * alpha0,
            decay: 0.0,
            mixing: 0.0,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn advance(&mut self) {
        let p = self.params;
        let tau = self.t;
        let a = self.schedule.alpha(tau);
        self.decay += a * p.mu_pow(tau as f64);
        self.mixing += a * (self.alpha0 * p.mu_pow(tau as f64 / 2.0) + self.schedule.alpha(tau.div_ceil(2)));
        self.t += 1;
        let next = self.schedule.alpha(self.t);
        self.sum_alpha += next;
        self.sum_alpha_sq += next * next;
    }

    pub fn advance_to(&mut self, t: u64) {
        while self.t < t {
            self.advance();
        }
    }

    pub fn value(&self, target: BoundTarget) -> f64 {
        assemble(self.params, target, self.alpha0, self.sum_alpha, self.sum_alpha_sq, self.decay, self.mixing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub t: u64,
    pub gap_zbar: f64,
    pub bound_zbar: Option<f64>,
    pub ok_zbar: Option<bool>,
    pub gap_agents: Vec<f64>,
    pub bound_agents: Vec<Option<f64>>,
    pub ok_agents: Vec<Option<bool>>,
}

/// Gap of the plain `T`-step average against the fixed-stepsize bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedHorizonCheck {
    pub horizon: u64,
    pub gap_zbar: f64,
    pub bound_zbar: f64,
    pub gap_agents: Vec<f64>,
    pub bound_agents: Vec<f64>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub f_star: f64,
    pub rows: Vec<GapRow>,
    pub fixed: Option<FixedHorizonCheck>,
    /// Why bounds are missing, when they are.
    pub unavailable: Option<String>,
    pub min_gap: f64,
}

impl GapReport {
    /// False iff some available bound is exceeded.
    pub fn all_ok(&self) -> bool {
        let rows_ok = self
            .rows
            .iter()
            .all(|r| r.ok_zbar != Some(false) && r.ok_agents.iter().all(|o| *o != Some(false)));
        rows_ok && self.fixed.as_ref().map_or(true, |f| f.ok)
    }

    /// First `(step, which)` where a bound is exceeded; `which` is `None` for `zbar`.
    pub fn first_violation(&self) -> Option<(u64, Option<usize>)> {
        for r in &self.rows {
            if r.ok_zbar == Some(false) {
                return Some((r.t, None));
            }
            if let Some(k) = r.ok_agents.iter().position(|o| *o == Some(false)) {
                return Some((r.t, Some(k)));
            }
        }
        None
    }
}

fn within(gap: f64, bound: f64) -> bool {
    gap <= bound + ORACLE_BUDGET
}

/// Measured ergodic gaps at every recorded step next to the bound for that
/// step. Rows use the series form for the run's stepsize sequence; for a
/// fixed stepsize the `T`-step average is also checked against the
/// fixed-horizon form.
pub fn gap_vs_bound_report(
    trace: &RunTrace,
    params: &BoundParams,
    f_star: f64,
    objectives: &ObjectiveSet,
    stepsize: &StepSchedule,
) -> GapReport {
    let n = trace.n;
    let mut evaluator = TimeVaryingBound::new(params, *stepsize);
    let unavailable = evaluator.as_ref().err().map(ToString::to_string);
    let mut min_gap = f64::INFINITY;
    let mut rows = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        let gap_zbar = objectives.evaluate_global(&rec.ergodic_zbar) - f_star;
        let gap_agents: Vec<f64> =
            rec.ergodic_z.iter().map(|z| objectives.evaluate_global(z) - f_star).collect();
        min_gap = gap_agents.iter().fold(min_gap.min(gap_zbar), |m, &g| m.min(g));
        let (bound_zbar, bound_agents) = match evaluator.as_mut() {
            Ok(ev) => {
                ev.advance_to(rec.t);
                (
                    Some(ev.value(BoundTarget::Average)),
                    (0..n).map(|k| Some(ev.value(BoundTarget::Agent(k)))).collect(),
                )
            }
            Err(_) => (None, vec![None; n]),
        };
        rows.push(GapRow {
            t: rec.t,
            ok_zbar: bound_zbar.map(|b| within(gap_zbar, b)),
            ok_agents: gap_agents.iter().zip(&bound_agents).map(|(&g, b)| b.map(|b| within(g, b))).collect(),
            gap_zbar,
            bound_zbar,
            gap_agents,
            bound_agents,
        });
    }

    let fixed = match *stepsize {
        StepSchedule::Fixed { horizon } if horizon == trace.horizon && unavailable.is_none() => {
            let rec = trace.record_at(horizon - 1);
            let bounds = bound_rhs_fixed(params, horizon, BoundTarget::Average).ok().and_then(|b| {
                (0..n)
                    .map(|k| bound_rhs_fixed(params, horizon, BoundTarget::Agent(k)))
                    .collect::<Result<Vec<_>, _>>()
                    .ok()
                    .map(|agents| (b, agents))
            });
            match (rec, bounds) {
                (Some(rec), Some((bound_zbar, bound_agents))) => {
                    let gap_zbar = objectives.evaluate_global(&rec.ergodic_zbar) - f_star;
                    let gap_agents: Vec<f64> =
                        rec.ergodic_z.iter().map(|z| objectives.evaluate_global(z) - f_star).collect();
                    let ok = within(gap_zbar, bound_zbar)
                        && gap_agents.iter().zip(&bound_agents).all(|(&g, &b)| within(g, b));
                    Some(FixedHorizonCheck { horizon, gap_zbar, bound_zbar, gap_agents, bound_agents, ok })
                }
                _ => None,
            }
        }
        _ => None,
    };

    GapReport { f_star, rows, fixed, unavailable, min_gap }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(n: usize, window: usize) -> BoundParams {
        BoundParams::new(n, window, 1.0, &vec![vec![0.0]; n], vec![0.0])
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn constants_for_two_agents() {
        let p = zero_params(2, 1);
        assert_eq!(p.eta, 0.25);
        assert!((p.mu - 0.75).abs() < 1e-15);
        assert!((p.one_minus_mu - 0.25).abs() < 1e-15);
        assert_eq!(p.c, 4.0);
    }

    #[test]
    fn tiny_eta_keeps_one_minus_mu() {
        let p = zero_params(5, 5);
        assert!((p.eta - 5f64.powi(-25)).abs() <= 1e-30);
        assert!(p.one_minus_mu > 0.0);
        assert!(rel_close(p.one_minus_mu, p.eta / 5.0, 1e-9));
        assert!(p.check_defined().is_ok());
        assert!(bound_rhs_fixed(&p, 100, BoundTarget::Average).unwrap().is_finite());
    }

    // Reference values from a 40-digit evaluation of the closed forms.
    #[test]
    fn fixed_bound_regression() {
        let p = zero_params(2, 1);
        let b = bound_rhs_fixed(&p, 100, BoundTarget::Average).unwrap();
        assert!(rel_close(b, 136.583_333_333_333_333_3, 1e-12), "{b}");
        let b4 = bound_rhs_fixed(&p, 400, BoundTarget::Average).unwrap();
        assert!(rel_close(b4, 68.291_666_666_666_666_67, 1e-12), "{b4}");
        assert!(rel_close(b4, b / 2.0, 1e-12));
    }

    #[test]
    fn fixed_bound_with_spread_regression() {
        let x0 = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let p = BoundParams::new(3, 3, 1.0, &x0, vec![0.0]);
        let avg = bound_rhs_fixed(&p, 100, BoundTarget::Average).unwrap();
        assert!(rel_close(avg, 12_459_420_882.180_325_65, 1e-11), "{avg}");
        let k0 = bound_rhs_fixed(&p, 100, BoundTarget::Agent(0)).unwrap();
        let k1 = bound_rhs_fixed(&p, 100, BoundTarget::Agent(1)).unwrap();
        assert!(rel_close(k0, 12_459_420_882.185_325_65, 1e-11), "{k0}");
        assert!(rel_close(k1, 12_459_420_882.180_325_65, 1e-11), "{k1}");
    }

    #[test]
    fn time_varying_bound_regression() {
        let p = zero_params(2, 1);
        let s = StepSchedule::Diminishing { a: 1.0, p: 1.0 };
        let b0 = bound_rhs_time_varying(&p, &s, 0, BoundTarget::Average).unwrap();
        assert!(rel_close(b0, 0.5, 1e-15));
        let b10 = bound_rhs_time_varying(&p, &s, 10, BoundTarget::Average).unwrap();
        assert!(rel_close(b10, 1_770.522_438_217_949_175, 1e-12), "{b10}");

        let x0 = vec![vec![-1.0], vec![0.5], vec![2.0]];
        let p = BoundParams::new(3, 3, 1.0, &x0, vec![0.0]);
        let avg = bound_rhs_time_varying(&p, &s, 7, BoundTarget::Average).unwrap();
        assert!(rel_close(avg, 173_939_643_246.646_864_26, 1e-11), "{avg}");
        let k2 = bound_rhs_time_varying(&p, &s, 7, BoundTarget::Agent(2)).unwrap();
        assert!(rel_close(k2, 173_939_643_246.830_832_72, 1e-11), "{k2}");
    }

    #[test]
    fn spread_term_vanishes_for_equal_starts() {
        let x0 = vec![vec![1.5]; 3];
        let p = BoundParams::new(3, 2, 1.0, &x0, vec![0.0]);
        assert_eq!(p.spread(BoundTarget::Average), 0.0);
        assert_eq!(p.spread(BoundTarget::Agent(1)), 0.0);
        let s = StepSchedule::Diminishing { a: 1.0, p: 1.0 };
        assert_eq!(
            bound_rhs_time_varying(&p, &s, 5, BoundTarget::Average).unwrap(),
            bound_rhs_time_varying(&p, &s, 5, BoundTarget::Agent(0)).unwrap()
        );
    }

    #[test]
    fn incremental_matches_direct_summation() {
        let x0 = vec![vec![-1.0, 2.0], vec![0.5, 0.0], vec![2.0, -3.0]];
        let p = BoundParams::new(3, 3, 1.3, &x0, vec![0.2, -0.1]);
        let s = StepSchedule::Diminishing { a: 0.7, p: 0.8 };
        let mut inc = TimeVaryingBound::new(&p, s).unwrap();
        for t in [0u64, 1, 2, 3, 10, 57, 300] {
            inc.advance_to(t);
            for target in [BoundTarget::Average, BoundTarget::Agent(2)] {
                let direct = bound_rhs_time_varying(&p, &s, t, target).unwrap();
                assert_eq!(inc.value(target), direct, "t={t}");
            }
        }
    }

    #[test]
    fn degenerate_single_agent() {
        let p = zero_params(1, 1);
        assert_eq!(p.eta, 1.0);
        assert_eq!(p.mu, 0.0);
        assert_eq!(bound_rhs_fixed(&p, 10, BoundTarget::Average), Err(AnalysisError::DegenerateMu));
        let s = StepSchedule::Diminishing { a: 1.0, p: 1.0 };
        assert_eq!(bound_rhs_time_varying(&p, &s, 3, BoundTarget::Average), Err(AnalysisError::DegenerateMu));
        assert_eq!(p.contraction_bound(0), 4.0);
        assert_eq!(p.contraction_bound(3), 0.0);
    }

    #[test]
    fn huge_networks_are_unrepresentable() {
        let p = zero_params(20, 20);
        assert!(matches!(p.check_defined(), Err(AnalysisError::Unrepresentable(400))));
    }

    #[test]
    fn zero_horizon_is_rejected() {
        assert_eq!(bound_rhs_fixed(&zero_params(2, 1), 0, BoundTarget::Average), Err(AnalysisError::ZeroHorizon));
    }
}
