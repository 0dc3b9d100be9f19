//! The heterogeneous push-sum subgradient iteration.
//!
//! At every step each agent `j` evaluates one subgradient `g_j` of its cost
//! at `z_j = x_j / y_j`, then sends `w_ij (x_j - alpha g_j sigma_j)` and
//! `w_ij y_j` to every out-neighbor `i` (itself included). Each agent sums
//! what it receives and, when its own switch is off, applies
//! `-alpha g_i` after mixing:
//!
//! ```text
//! x_i(t+1) = sum_j w_ij (x_j - alpha g_j sigma_j) - alpha g_i (1 - sigma_i)
//! y_i(t+1) = sum_j w_ij y_j
//! ```
//!
//! `sigma = 1` everywhere is subgradient-push (step, then mix); `sigma = 0`
//! everywhere is push-subgradient (mix, then step). Rounds are synchronous:
//! every message is built from the time-`t` state before anything is applied.

mod run;

pub use run::{
    default_initial_points, run, InvariantSummary, Record, Residual, RunConfig, RunTrace, Simulation,
    StepEvent, WeightFault,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::ObjectiveSet;
use crate::weights::WeightMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("step {step}: agent {} has push-sum weight {value} <= 0 (weight matrix is not column stochastic)", agent + 1)]
    NonPositiveWeight { step: u64, agent: usize, value: f64 },
    #[error("step {step}: agent {} has a non-finite state", agent + 1)]
    NonFinite { step: u64, agent: usize },
    #[error("state has {state} agents but the weight matrix is {matrix}x{matrix}")]
    DimensionMismatch { state: usize, matrix: usize },
    #[error("{0}")]
    Config(String),
}

/// One agent's push-sum pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub y: f64,
}

impl AgentState {
    pub fn new(x: Vec<f64>) -> Self {
        Self { x, y: 1.0 }
    }

    /// `z = x / y`, the agent's estimate of the optimum.
    pub fn z(&self) -> Vec<f64> {
        self.x.iter().map(|v| v / self.y).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub t: u64,
    pub agents: Vec<AgentState>,
}

impl NetworkState {
    /// State at `t = 0` with `y_i = 1`.
    pub fn initial(points: Vec<Vec<f64>>) -> Self {
        Self { t: 0, agents: points.into_iter().map(AgentState::new).collect() }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.x.len())
    }

    pub fn ys(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.y).collect()
    }

    pub fn zs(&self) -> Vec<Vec<f64>> {
        self.agents.iter().map(AgentState::z).collect()
    }

    /// Total push-sum weight; stays at `n` under column-stochastic mixing.
    pub fn mass(&self) -> f64 {
        self.agents.iter().map(|a| a.y).sum()
    }
}

/// Which ordering each agent uses at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SwitchingSignal {
    /// Every agent uses the same bit forever.
    Constant { value: u8 },
    /// Agent `i` follows `patterns[i % patterns.len()]`, cycling in time.
    Periodic { patterns: Vec<Vec<u8>> },
    /// Independent fair-or-biased coin per agent per step.
    Bernoulli { p: f64, seed: u64 },
}

impl SwitchingSignal {
    pub fn subgradient_push() -> Self {
        Self::Constant { value: 1 }
    }

    pub fn push_subgradient() -> Self {
        Self::Constant { value: 0 }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::Config(format!("switching signal: {msg}")));
        match self {
            Self::Constant { value } if *value > 1 => bad("constant value must be 0 or 1"),
            Self::Periodic { patterns } if patterns.is_empty() || patterns.iter().any(Vec::is_empty) => {
                bad("periodic patterns must be non-empty")
            }
            Self::Periodic { patterns } if patterns.iter().flatten().any(|&b| b > 1) => {
                bad("periodic patterns may only contain 0 and 1")
            }
            Self::Bernoulli { p, .. } if !(0.0..=1.0).contains(p) => bad("bernoulli p must lie in [0, 1]"),
            _ => Ok(()),
        }
    }

    /// All agents' bits at step `t`. A pure function of `(self, t, n)`.
    pub fn sigmas(&self, t: u64, n: usize) -> Vec<bool> {
        match self {
            Self::Constant { value } => vec![*value == 1; n],
            Self::Periodic { patterns } => (0..n)
                .map(|i| {
                    let pattern = &patterns[i % patterns.len()];
                    pattern[(t % pattern.len() as u64) as usize] == 1
                })
                .collect(),
            Self::Bernoulli { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(t);
                (0..n).map(|_| rng.gen_bool(*p)).collect()
            }
        }
    }

    pub fn sigma(&self, agent: usize, t: u64, n: usize) -> bool {
        self.sigmas(t, n)[agent]
    }
}

/// Stepsize sequence `alpha(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `alpha(t) = a / (t + 1)^p`.
    Diminishing { a: f64, p: f64 },
    /// `alpha(t) = 1 / sqrt(T)` for a declared horizon `T`.
    Fixed { horizon: u64 },
}

impl StepSchedule {
    /// Checked constructor; the exponent must lie in `(1/2, 1]`.
    pub fn diminishing(a: f64, p: f64) -> Result<Self, EngineError> {
        let s = Self::Diminishing { a, p };
        if validate_schedule(&s) {
            Ok(s)
        } else {
            Err(EngineError::Config(assumption2_message(a, p)))
        }
    }

    pub fn fixed(horizon: u64) -> Result<Self, EngineError> {
        if horizon == 0 {
            return Err(EngineError::Config("fixed stepsize needs a positive horizon".into()));
        }
        Ok(Self::Fixed { horizon })
    }

    #[inline]
    pub fn alpha(&self, t: u64) -> f64 {
        match *self {
            Self::Diminishing { a, p } => a / ((t + 1) as f64).powf(p),
            Self::Fixed { horizon } => 1.0 / (horizon as f64).sqrt(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Self::Fixed { .. })
    }
}

pub(crate) fn assumption2_message(a: f64, p: f64) -> String {
    format!(
        "Assumption 2 violated: alpha(t) = {a}/(t+1)^{p} needs a > 0 and p in (1/2, 1] \
         so that the stepsizes sum to infinity while their squares stay summable"
    )
}

/// True iff the schedule is fixed, or diminishing with `a > 0` and
/// `p in (1/2, 1]`. The series conditions follow from the parameter range.
pub fn validate_schedule(s: &StepSchedule) -> bool {
    match *s {
        StepSchedule::Diminishing { a, p } => a.is_finite() && a > 0.0 && p > 0.5 && p <= 1.0,
        StepSchedule::Fixed { horizon } => horizon > 0,
    }
}

/// What agent `from` sends to agent `to` in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// One message per out-neighbor of `j` (every `i` with `w_ij != 0`, `j` itself
/// included): `(w_ij (x_j - alpha g_j sigma_j), w_ij y_j)`.
pub fn outgoing_messages(
    j: usize,
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    sigma_j: bool,
    g_j: &[f64],
) -> Vec<Message> {
    let agent = &state.agents[j];
    let s = if sigma_j { 1.0 } else { 0.0 };
    let adjusted: Vec<f64> = agent.x.iter().zip(g_j).map(|(x, g)| x - alpha * g * s).collect();
    (0..w.n())
        .filter_map(|i| {
            let wij = w.get(i, j);
            (wij != 0.0).then(|| Message {
                from: j,
                to: i,
                x: adjusted.iter().map(|v| wij * v).collect(),
                y: wij * agent.y,
            })
        })
        .collect()
}

/// Subgradient of each `f_j` at `z_j(t)`.
pub fn subgradients(state: &NetworkState, objectives: &ObjectiveSet) -> Vec<Vec<f64>> {
    state
        .agents
        .iter()
        .zip(objectives.components())
        .map(|(a, f)| f.subgradient(&a.z()))
        .collect()
}

/// Result of one synchronous round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: NetworkState,
    /// `g_i(t)`, evaluated once per agent and used in every payload.
    pub subgradients: Vec<Vec<f64>>,
}

/// One round of the heterogeneous iteration, built from explicit messages.
pub fn step(
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    sigma: &[bool],
    objectives: &ObjectiveSet,
) -> Result<StepOutcome, EngineError> {
    let n = state.n();
    if w.n() != n {
        return Err(EngineError::DimensionMismatch { state: n, matrix: w.n() });
    }
    let d = state.dim();
    let grads = subgradients(state, objectives);

    let mut x_next = vec![vec![0.0; d]; n];
    let mut y_next = vec![0.0; n];
    for j in 0..n {
        for msg in outgoing_messages(j, state, w, alpha, sigma[j], &grads[j]) {
            for (acc, v) in x_next[msg.to].iter_mut().zip(&msg.x) {
                *acc += v;
            }
            y_next[msg.to] += msg.y;
        }
    }
    for i in 0..n {
        let local = if sigma[i] { 0.0 } else { 1.0 };
        for (acc, g) in x_next[i].iter_mut().zip(&grads[i]) {
            *acc -= alpha * g * local;
        }
    }
    finish(state.t, x_next, y_next, grads)
}

/// Matrix form of the same round: `x(t+1) = W x(t) - alpha eps(t)` with
/// `eps_i = sum_j w_ij g_j sigma_j + g_i (1 - sigma_i)`. Agrees with
/// [`step`] up to rounding.
pub fn step_dense(
    state: &NetworkState,
    w: &WeightMatrix,
    alpha: f64,
    sigma: &[bool],
    objectives: &ObjectiveSet,
) -> Result<StepOutcome, EngineError> {
    let n = state.n();
    if w.n() != n {
        return Err(EngineError::DimensionMismatch { state: n, matrix: w.n() });
    }
    let d = state.dim();
    let grads = subgradients(state, objectives);
    let y_next = w.apply(&state.ys());
    let mut x_next = vec![vec![0.0; d]; n];
    for i in 0..n {
        let row = w.row(i);
        for k in 0..d {
            let mut mixed = 0.0;
            let mut eps = 0.0;
            for j in 0..n {
                mixed += row[j] * state.agents[j].x[k];
                if sigma[j] {
                    eps += row[j] * grads[j][k];
                }
            }
            if !sigma[i] {
                eps += grads[i][k];
            }
            x_next[i][k] = mixed - alpha * eps;
        }
    }
    finish(state.t, x_next, y_next, grads)
}

fn finish(
    t: u64,
    x_next: Vec<Vec<f64>>,
    y_next: Vec<f64>,
    subgradients: Vec<Vec<f64>>,
) -> Result<StepOutcome, EngineError> {
    for (agent, (x, &y)) in x_next.iter().zip(&y_next).enumerate() {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NonFinite { step: t, agent });
        }
        if y <= 0.0 {
            return Err(EngineError::NonPositiveWeight { step: t, agent, value: y });
        }
    }
    let agents = x_next.into_iter().zip(y_next).map(|(x, y)| AgentState { x, y }).collect();
    Ok(StepOutcome { state: NetworkState { t: t + 1, agents }, subgradients })
}
