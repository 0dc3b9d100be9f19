//! The invariant suite: every identity and inequality a valid run must
//! satisfy, evaluated against a finished trace plus a few replays.

use serde::Serialize;

use crate::analysis::{gap_vs_bound_report, product_gaps, BoundParams, GapReport};
use crate::engine::{step, EngineError, NetworkState, RunConfig, RunTrace, StepSchedule};
use crate::reference;
use crate::weights::{is_doubly_stochastic, WeightRule};

/// Numerical limits used by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// `|sum_i y_i - n|`.
    pub mass: f64,
    /// Slack above `n` for `y_i <= n`.
    pub weight_upper: f64,
    /// `||y(t)^T - y(t+1)^T S(t)||_inf`.
    pub absolute_probability: f64,
    /// One-step and accumulated residual of the `<z>` recursion.
    pub recursion: f64,
    /// Distance of `<z>` outside the hull of the `z_i`.
    pub hull: f64,
    /// Engine against the reference special cases.
    pub mode: f64,
    /// `|y_i - 1|` under doubly stochastic weights.
    pub doubly_stochastic_y: f64,
    /// Slack on `product_gap(lag) <= c mu^lag`.
    pub contraction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass: 1e-10,
            weight_upper: 1e-10,
            absolute_probability: 1e-12,
            recursion: 1e-9,
            hull: 1e-9,
            mode: 1e-15,
            doubly_stochastic_y: 1e-12,
            contraction: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The check does not apply to this configuration.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub verdict: Verdict,
    /// Worst observed value, where one exists.
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub step: Option<u64>,
    pub detail: String,
}

impl CheckResult {
    fn measured(name: &'static str, value: f64, limit: f64, step: Option<u64>, detail: String) -> Self {
        let verdict = if value <= limit { Verdict::Pass } else { Verdict::Fail };
        Self { name, verdict, value: Some(value), limit: Some(limit), step, detail }
    }

    fn unavailable(name: &'static str, detail: impl Into<String>) -> Self {
        Self { name, verdict: Verdict::Unavailable, value: None, limit: None, step: None, detail: detail.into() }
    }
}

pub const WEIGHT_BOUNDS: &str = "push-sum weight bounds";
pub const MASS: &str = "mass conservation";
pub const ABSOLUTE_PROBABILITY: &str = "absolute probability sequence";
pub const RECURSION: &str = "average recursion";
pub const HULL: &str = "average in hull";
pub const CONTRACTION: &str = "product contraction";
pub const MODE_EQUIVALENCE: &str = "mode equivalence";
pub const DOUBLY_STOCHASTIC: &str = "doubly stochastic reduction";
pub const SINGLE_AGENT: &str = "single-agent reduction";
pub const GAP_BOUNDS: &str = "gap bound domination";
pub const CONSENSUS_DECAY: &str = "consensus radius decay";

/// Largest per-step deviation of the engine from the dedicated forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeDeviation {
    /// Engine with every switch on against step-then-push.
    pub subgradient_push: f64,
    /// Engine with every switch off against push-then-step.
    pub push_subgradient: f64,
}

/// Deviations under doubly stochastic weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublyStochasticDeviation {
    /// `max |y_i(t) - 1|` over both modes.
    pub y: f64,
    /// `max |z_i(t) - x_i(t)|` over both modes.
    pub z_minus_x: f64,
    pub adapt_then_combine: f64,
    pub combine_then_adapt: f64,
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn xs(state: &NetworkState) -> Vec<Vec<f64>> {
    state.agents.iter().map(|a| a.x.clone()).collect()
}

/// Replays `steps` rounds of `config` twice, with every switch on and then
/// off, next to the reference implementations; each side evolves on its own.
pub fn mode_equivalence(config: &RunConfig, steps: u64) -> Result<ModeDeviation, EngineError> {
    let mut dev = [0.0f64; 2];
    for (slot, on) in [true, false].into_iter().enumerate() {
        let n = config.n();
        let mut state = NetworkState::initial(config.initial.clone());
        let mut x = config.initial.clone();
        let mut y = vec![1.0; n];
        for t in 0..steps {
            let w = config.weights_at(t)?;
            let alpha = config.stepsize.alpha(t);
            state = step(&state, &w, alpha, &vec![on; n], &config.objectives)?.state;
            (x, y) = if on {
                reference::subgradient_push_step(&x, &y, &w, alpha, &config.objectives)
            } else {
                reference::push_subgradient_step(&x, &y, &w, alpha, &config.objectives)
            };
            let dy = state.ys().iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            dev[slot] = dev[slot].max(max_abs_diff(&xs(&state), &x)).max(dy);
        }
    }
    Ok(ModeDeviation { subgradient_push: dev[0], push_subgradient: dev[1] })
}

/// `None` unless every `W(t)`, `t < steps`, is doubly stochastic.
pub fn doubly_stochastic_equivalence(
    config: &RunConfig,
    steps: u64,
) -> Result<Option<DoublyStochasticDeviation>, EngineError> {
    for t in 0..steps {
        if !is_doubly_stochastic(&config.weights_at(t)?) {
            return Ok(None);
        }
    }
    let n = config.n();
    let mut out = DoublyStochasticDeviation { y: 0.0, z_minus_x: 0.0, adapt_then_combine: 0.0, combine_then_adapt: 0.0 };
    for on in [true, false] {
        let mut state = NetworkState::initial(config.initial.clone());
        let mut x = config.initial.clone();
        for t in 0..steps {
            let w = config.weights_at(t)?;
            let alpha = config.stepsize.alpha(t);
            state = step(&state, &w, alpha, &vec![on; n], &config.objectives)?.state;
            let dev = if on {
                x = reference::adapt_then_combine(&x, &w, alpha, &config.objectives);
                &mut out.adapt_then_combine
            } else {
                x = reference::combine_then_adapt(&x, &w, alpha, &config.objectives);
                &mut out.combine_then_adapt
            };
            *dev = dev.max(max_abs_diff(&xs(&state), &x));
            out.y = state.ys().iter().map(|y| (y - 1.0).abs()).fold(out.y, f64::max);
            out.z_minus_x = out.z_minus_x.max(max_abs_diff(&state.zs(), &xs(&state)));
        }
    }
    Ok(Some(out))
}

/// For a single agent: largest difference between the trace and plain
/// subgradient descent on the same cost. `None` when `n > 1`.
pub fn single_agent_deviation(config: &RunConfig, trace: &RunTrace) -> Option<f64> {
    if config.n() != 1 {
        return None;
    }
    let f = &config.objectives.components()[0];
    let path = reference::subgradient_descent(f, &config.initial[0], (0..config.horizon).map(|t| config.stepsize.alpha(t)));
    let dev = trace
        .records
        .iter()
        .map(|r| max_abs_diff(&r.x, std::slice::from_ref(&path[r.t as usize])))
        .fold(0.0, f64::max);
    let final_dev = max_abs_diff(&xs(&trace.final_state), std::slice::from_ref(&path[config.horizon as usize]));
    Some(dev.max(final_dev))
}

/// `BoundParams` for a config, with the claimed window as `L`.
pub fn bound_params(config: &RunConfig, g: f64, z_star: Vec<f64>) -> BoundParams {
    BoundParams::new(config.n(), config.mixing.graphs().claimed_window(), g, &config.initial, z_star)
}

/// Optimum information for the domination check.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumInput {
    pub f_star: f64,
    pub z_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    pub params: BoundParams,
    /// True when `G` was measured along the trajectory instead of known.
    pub measured_g: bool,
    #[serde(skip)]
    pub gaps: Option<GapReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| r.verdict == Verdict::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Lags checked for the product contraction.
pub const CONTRACTION_LAGS: u64 = 200;

/// Runs every check against `trace`, which must come from `config`.
pub fn run_suite(config: &RunConfig, trace: &RunTrace, optimum: Option<&OptimumInput>, tol: &Tolerances) -> SuiteReport {
    let n = config.n();
    let inv = &trace.invariants;
    let known_g = config.objectives.bound_g();
    let g = known_g.unwrap_or(inv.measured_g);
    let z_star = optimum.map_or_else(|| vec![0.0; config.dim()], |o| o.z_star.clone());
    let params = bound_params(config, g, z_star);
    let mut results = Vec::new();

    let upper = n as f64 + tol.weight_upper;
    let lower_ok = inv.y_min.value > 0.0 && inv.y_min.value >= params.eta;
    let upper_ok = inv.y_max.value <= upper;
    let (worst, step) = if lower_ok { (inv.y_max, inv.y_max.step) } else { (inv.y_min, inv.y_min.step) };
    results.push(CheckResult {
        name: WEIGHT_BOUNDS,
        verdict: if lower_ok && upper_ok { Verdict::Pass } else { Verdict::Fail },
        value: Some(worst.value),
        limit: Some(if lower_ok { upper } else { params.eta }),
        step: Some(step),
        detail: format!(
            "eta = {:e} <= y_i <= n = {n}; observed min {:e} (agent {}, step {}), max {:e} (agent {}, step {})",
            params.eta,
            inv.y_min.value,
            inv.y_min.agent + 1,
            inv.y_min.step,
            inv.y_max.value,
            inv.y_max.agent + 1,
            inv.y_max.step
        ),
    });
    results.push(CheckResult::measured(MASS, inv.mass.value, tol.mass, Some(inv.mass.step), "|sum_i y_i - n|".into()));
    results.push(CheckResult::measured(
        ABSOLUTE_PROBABILITY,
        inv.absolute_probability.value,
        tol.absolute_probability,
        Some(inv.absolute_probability.step),
        "||y(t)^T - y(t+1)^T S(t)||_inf".into(),
    ));
    let (rec_value, rec_step) = if inv.recursion_step.value >= inv.recursion_drift.value {
        (inv.recursion_step.value, inv.recursion_step.step)
    } else {
        (inv.recursion_drift.value, inv.recursion_drift.step)
    };
    results.push(CheckResult::measured(
        RECURSION,
        rec_value,
        tol.recursion,
        Some(rec_step),
        format!(
            "<z(t+1)> = <z(t)> - (alpha/n) sum_i g_i: one-step {:e}, accumulated {:e}",
            inv.recursion_step.value, inv.recursion_drift.value
        ),
    ));
    results.push(CheckResult::measured(HULL, inv.hull.value, tol.hull, Some(inv.hull.step), "per coordinate".into()));

    results.push(contraction_check(config, &params, tol));
    results.push(mode_check(config, tol));
    results.push(doubly_stochastic_check(config, tol));
    results.push(match single_agent_deviation(config, trace) {
        Some(dev) => CheckResult::measured(SINGLE_AGENT, dev, 0.0, None, "exact agreement with subgradient descent".into()),
        None => CheckResult::unavailable(SINGLE_AGENT, "more than one agent"),
    });

    let gaps = optimum.map(|o| gap_vs_bound_report(trace, &params, o.f_star, &config.objectives, &config.stepsize));
    results.push(gap_check(gaps.as_ref(), known_g.is_none()));
    results.push(consensus_check(config, trace));

    SuiteReport { results, params, measured_g: known_g.is_none(), gaps }
}

fn contraction_check(config: &RunConfig, params: &BoundParams, tol: &Tolerances) -> CheckResult {
    let unbounded = matches!(config.mixing.rule(), WeightRule::OutDegree) || config.mixing.graphs().period().is_some();
    let max_lag = if unbounded { CONTRACTION_LAGS } else { CONTRACTION_LAGS.min(config.horizon.saturating_sub(1)) };
    match product_gaps(&config.mixing, 0, max_lag) {
        Ok(gaps) => {
            let (lag, excess) = gaps
                .iter()
                .enumerate()
                .map(|(lag, &gap)| (lag as u64, gap - params.contraction_bound(lag as u64)))
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            CheckResult::measured(
                CONTRACTION,
                excess,
                tol.contraction,
                Some(lag),
                format!("max over lags 0..={max_lag} of gap - 4 mu^lag, 1 - mu = {:e}", params.one_minus_mu),
            )
        }
        Err(e) => CheckResult { verdict: Verdict::Fail, ..CheckResult::unavailable(CONTRACTION, e.to_string()) },
    }
}

fn mode_check(config: &RunConfig, tol: &Tolerances) -> CheckResult {
    match mode_equivalence(config, config.horizon) {
        Ok(dev) => CheckResult::measured(
            MODE_EQUIVALENCE,
            dev.subgradient_push.max(dev.push_subgradient),
            tol.mode,
            None,
            format!(
                "all on vs subgradient-push {:e}, all off vs push-subgradient {:e}",
                dev.subgradient_push, dev.push_subgradient
            ),
        ),
        Err(e) => CheckResult { verdict: Verdict::Fail, ..CheckResult::unavailable(MODE_EQUIVALENCE, e.to_string()) },
    }
}

fn doubly_stochastic_check(config: &RunConfig, tol: &Tolerances) -> CheckResult {
    match doubly_stochastic_equivalence(config, config.horizon) {
        Ok(Some(dev)) => {
            let pass = dev.y <= tol.doubly_stochastic_y
                && dev.z_minus_x <= tol.doubly_stochastic_y
                && dev.adapt_then_combine <= tol.mode
                && dev.combine_then_adapt <= tol.mode;
            CheckResult {
                name: DOUBLY_STOCHASTIC,
                verdict: if pass { Verdict::Pass } else { Verdict::Fail },
                value: Some(dev.adapt_then_combine.max(dev.combine_then_adapt)),
                limit: Some(tol.mode),
                step: None,
                detail: format!(
                    "|y - 1| {:e}, |z - x| {:e}, adapt-then-combine {:e}, combine-then-adapt {:e}",
                    dev.y, dev.z_minus_x, dev.adapt_then_combine, dev.combine_then_adapt
                ),
            }
        }
        Ok(None) => CheckResult::unavailable(DOUBLY_STOCHASTIC, "weights are not doubly stochastic"),
        Err(e) => CheckResult { verdict: Verdict::Fail, ..CheckResult::unavailable(DOUBLY_STOCHASTIC, e.to_string()) },
    }
}

fn gap_check(gaps: Option<&GapReport>, measured_g: bool) -> CheckResult {
    let Some(report) = gaps else {
        return CheckResult::unavailable(GAP_BOUNDS, "no optimum available");
    };
    if let Some(reason) = &report.unavailable {
        let reason = if reason.contains("degenerate") { "unavailable (μ=0)".to_string() } else { reason.clone() };
        return CheckResult::unavailable(GAP_BOUNDS, reason);
    }
    let caveat = if measured_g { "; G measured along the trajectory (uncertified)" } else { "" };
    let checked = report.rows.len() + usize::from(report.fixed.is_some());
    match report.first_violation() {
        Some((t, who)) => CheckResult {
            name: GAP_BOUNDS,
            verdict: Verdict::Fail,
            value: None,
            limit: None,
            step: Some(t),
            detail: match who {
                None => format!("ergodic zbar gap exceeds its bound{caveat}"),
                Some(k) => format!("ergodic z_{} gap exceeds its bound{caveat}", k + 1),
            },
        },
        None if report.fixed.as_ref().is_some_and(|f| !f.ok) => CheckResult {
            name: GAP_BOUNDS,
            verdict: Verdict::Fail,
            value: None,
            limit: None,
            step: report.fixed.as_ref().map(|f| f.horizon - 1),
            detail: format!("fixed-horizon average exceeds the fixed-stepsize bound{caveat}"),
        },
        None => CheckResult {
            name: GAP_BOUNDS,
            verdict: Verdict::Pass,
            value: Some(report.min_gap),
            limit: None,
            step: None,
            detail: format!("{checked} comparisons, smallest gap {:e}{caveat}", report.min_gap),
        },
    }
}

/// With a diminishing stepsize, `max_i ||z_i - zbar||` at `T` is below its
/// value at `T / 10`. Only checked for `T >= 1000`.
fn consensus_check(config: &RunConfig, trace: &RunTrace) -> CheckResult {
    let horizon = config.horizon;
    if !matches!(config.stepsize, StepSchedule::Diminishing { .. }) || horizon < 1000 {
        return CheckResult::unavailable(CONSENSUS_DECAY, "needs a diminishing stepsize and T >= 1000");
    }
    let early = trace.consensus_radius[(horizon / 10) as usize];
    let late = trace.consensus_radius[horizon as usize];
    let pass = late < early || early <= 1e-12;
    CheckResult {
        name: CONSENSUS_DECAY,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        value: Some(late),
        limit: Some(early),
        step: Some(horizon),
        detail: format!("radius at T/10 = {early:e}, at T = {late:e}"),
    }
}
