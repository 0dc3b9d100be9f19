use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{step, EngineError, NetworkState, StepSchedule, SwitchingSignal};
use crate::analysis::{bracket_z, check_absolute_probability, consensus_radius, z_bar, ErgodicAverage};
use crate::graph::{certify_uniform_strong_connectivity, Certification};
use crate::objectives::{norm, ObjectiveSet};
use crate::weights::{MixingSchedule, WeightMatrix, WeightsError};
use crate::ValidationError;

/// Adds `delta` to entry `(row, col)` of `W(step)` after validation. Exists
/// to exercise the invariant checks; a faulted run is never certified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightFault {
    pub step: u64,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mixing: MixingSchedule,
    pub objectives: ObjectiveSet,
    pub stepsize: StepSchedule,
    pub switching: SwitchingSignal,
    /// Number of steps `T`; the trace covers `t = 0..=T`.
    pub horizon: u64,
    /// `x_i(0)` for every agent.
    pub initial: Vec<Vec<f64>>,
    /// Record every `stride`-th state (plus `t = T - 1` and `t = T`).
    pub stride: u64,
    pub fault: Option<WeightFault>,
}

/// Agent `i` starts at the `i`-th draw from a seeded uniform distribution on `[-5, 5]^d`.
pub fn default_initial_points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-5.0..=5.0)).collect()).collect()
}

impl RunConfig {
    pub fn new(
        mixing: MixingSchedule,
        objectives: ObjectiveSet,
        stepsize: StepSchedule,
        switching: SwitchingSignal,
        horizon: u64,
        initial: Vec<Vec<f64>>,
    ) -> Self {
        Self { mixing, objectives, stepsize, switching, horizon, initial, stride: 1, fault: None }
    }

    pub fn n(&self) -> usize {
        self.mixing.n()
    }

    pub fn dim(&self) -> usize {
        self.objectives.dim()
    }

    /// Structural consistency: agent counts, dimensions, stride, switching source.
    pub fn check_shapes(&self) -> Result<(), EngineError> {
        let n = self.n();
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.objectives.n() != n {
            return bad(format!("{} objective components for {n} agents", self.objectives.n()));
        }
        if self.initial.len() != n {
            return bad(format!("{} initial points for {n} agents", self.initial.len()));
        }
        if let Some(i) = self.initial.iter().position(|x| x.len() != self.dim()) {
            return bad(format!("initial point of agent {} has the wrong dimension", i + 1));
        }
        if self.initial.iter().flatten().any(|v| !v.is_finite()) {
            return bad("initial points must be finite".into());
        }
        if self.stride == 0 {
            return bad("record stride must be positive".into());
        }
        if let Some(f) = &self.fault {
            if f.row >= n || f.col >= n {
                return bad("weight fault indexes outside the matrix".into());
            }
        }
        self.switching.validate()
    }

    /// Full pre-run validation: shapes, the stepsize assumption, the weight
    /// assumption on every matrix the run will use, and uniform strong
    /// connectivity of the graph schedule with its claimed window.
    pub fn validate(&self) -> Result<Certification, ValidationError> {
        self.check_shapes().map_err(|e| ValidationError::Shape(e.to_string()))?;
        if !super::validate_schedule(&self.stepsize) {
            let msg = match self.stepsize {
                StepSchedule::Diminishing { a, p } => super::assumption2_message(a, p),
                StepSchedule::Fixed { .. } => "fixed stepsize needs a positive horizon".into(),
            };
            return Err(ValidationError::Assumption2(msg));
        }
        self.mixing.validate(self.horizon).map_err(|e| match e {
            WeightsError::Invalid { .. } => ValidationError::Assumption1(e),
            other => ValidationError::Shape(other.to_string()),
        })?;
        let window = self.mixing.graphs().claimed_window();
        let horizon = self.horizon.max(window as u64);
        let cert = certify_uniform_strong_connectivity(self.mixing.graphs(), window, horizon);
        if !cert.connected {
            return Err(ValidationError::Connectivity { window, first_failure: cert.first_failure });
        }
        Ok(cert)
    }

    /// `W(t)` as applied by the engine, including any injected fault.
    pub fn weights_at(&self, t: u64) -> Result<WeightMatrix, EngineError> {
        let mut w = self.mixing.matrix_at(t).map_err(|e| EngineError::Config(e.to_string()))?;
        if let Some(f) = self.fault.filter(|f| f.step == t) {
            w.set(f.row, f.col, w.get(f.row, f.col) + f.delta);
        }
        Ok(w)
    }
}

/// Everything that happened in one round.
#[derive(Debug, Clone)]
pub struct StepEvent {
    pub t: u64,
    pub alpha: f64,
    pub sigma: Vec<bool>,
    pub weights: WeightMatrix,
    pub subgradients: Vec<Vec<f64>>,
    pub before: NetworkState,
}

/// Step-by-step driver over a [`RunConfig`].
pub struct Simulation<'a> {
    config: &'a RunConfig,
    state: NetworkState,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self, EngineError> {
        config.check_shapes()?;
        Ok(Self { config, state: NetworkState::initial(config.initial.clone()) })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn advance(&mut self) -> Result<StepEvent, EngineError> {
        let t = self.state.t;
        let weights = self.config.weights_at(t)?;
        let alpha = self.config.stepsize.alpha(t);
        let sigma = self.config.switching.sigmas(t, self.config.n());
        let out = step(&self.state, &weights, alpha, &sigma, &self.config.objectives)?;
        let before = std::mem::replace(&mut self.state, out.state);
        Ok(StepEvent { t, alpha, sigma, weights, subgradients: out.subgradients, before })
    }
}

/// Recorded state at one step, with derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub t: u64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub z_bar: Vec<f64>,
    pub bracket_z: Vec<f64>,
    pub f_zbar: f64,
    /// `sum_{tau <= t} alpha(tau) zbar(tau) / sum_{tau <= t} alpha(tau)`.
    pub ergodic_zbar: Vec<f64>,
    /// Same average of each agent's own `z_k`.
    pub ergodic_z: Vec<Vec<f64>>,
    pub alpha_sum: f64,
}

/// Largest value of a residual and the step where it occurred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    pub step: u64,
}

impl Default for Residual {
    fn default() -> Self {
        Self { value: 0.0, step: 0 }
    }
}

impl Residual {
    fn update(&mut self, value: f64, step: u64) {
        let value = if value.is_nan() { f64::INFINITY } else { value };
        if value > self.value {
            self.value = value;
            self.step = step;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub step: u64,
    pub agent: usize,
}

/// Worst observed residual of every invariant tracked during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantSummary {
    /// `|sum_i y_i(t) - n|`.
    pub mass: Residual,
    /// `||y(t)^T - y(t+1)^T S(t)||_inf`, attributed to step `t`.
    pub absolute_probability: Residual,
    /// One-step residual of the `<z>` recursion.
    pub recursion_step: Residual,
    /// Accumulated drift of `<z(t)>` from `<z(0)> - sum (alpha/n) sum_i g_i`.
    pub recursion_drift: Residual,
    /// Distance of `<z>` outside the coordinate-wise hull of the `z_i`.
    pub hull: Residual,
    pub y_min: Extremum,
    pub y_max: Extremum,
    /// Largest subgradient norm seen along the trajectory.
    pub measured_g: f64,
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub n: usize,
    pub dim: usize,
    pub horizon: u64,
    pub initial: NetworkState,
    pub final_state: NetworkState,
    pub records: Vec<Record>,
    /// `max_i ||z_i(t) - zbar(t)||` for every `t = 0..=T`.
    pub consensus_radius: Vec<f64>,
    pub invariants: InvariantSummary,
}

impl RunTrace {
    pub fn record_at(&self, t: u64) -> Option<&Record> {
        self.records.binary_search_by_key(&t, |r| r.t).ok().map(|i| &self.records[i])
    }
}

struct Recorder<'a> {
    config: &'a RunConfig,
    records: Vec<Record>,
    radius: Vec<f64>,
    inv: InvariantSummary,
    ergodic_zbar: ErgodicAverage,
    ergodic_z: Vec<ErgodicAverage>,
    predicted_bracket: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(config: &'a RunConfig, initial: &NetworkState) -> Self {
        let d = config.dim();
        let y0 = Extremum { value: 1.0, step: 0, agent: 0 };
        Self {
            config,
            records: Vec::new(),
            radius: Vec::with_capacity(config.horizon as usize + 1),
            inv: InvariantSummary {
                mass: Residual::default(),
                absolute_probability: Residual::default(),
                recursion_step: Residual::default(),
                recursion_drift: Residual::default(),
                hull: Residual::default(),
                y_min: y0,
                y_max: y0,
                measured_g: 0.0,
            },
            ergodic_zbar: ErgodicAverage::new(d),
            ergodic_z: vec![ErgodicAverage::new(d); config.n()],
            predicted_bracket: bracket_z(initial),
        }
    }

    fn should_record(&self, t: u64) -> bool {
        let horizon = self.config.horizon;
        t % self.config.stride == 0 || t == horizon || t + 1 == horizon
    }

    /// Per-state bookkeeping for the state at time `state.t`.
    fn observe(&mut self, state: &NetworkState) {
        let t = state.t;
        let n = state.n();
        let zs = state.zs();
        let zb = z_bar(state);
        let bracket = bracket_z(state);
        let alpha = self.config.stepsize.alpha(t);

        self.radius.push(consensus_radius(state));
        self.inv.mass.update((state.mass() - n as f64).abs(), t);
        for (agent, a) in state.agents.iter().enumerate() {
            if a.y < self.inv.y_min.value || a.y.is_nan() {
                self.inv.y_min = Extremum { value: a.y, step: t, agent };
            }
            if a.y > self.inv.y_max.value {
                self.inv.y_max = Extremum { value: a.y, step: t, agent };
            }
        }
        let mut outside: f64 = 0.0;
        for k in 0..state.dim() {
            let lo = zs.iter().map(|z| z[k]).fold(f64::INFINITY, f64::min);
            let hi = zs.iter().map(|z| z[k]).fold(f64::NEG_INFINITY, f64::max);
            outside = outside.max(lo - bracket[k]).max(bracket[k] - hi);
        }
        self.inv.hull.update(outside.max(0.0), t);

        self.ergodic_zbar.push(alpha, &zb);
        for (avg, z) in self.ergodic_z.iter_mut().zip(&zs) {
            avg.push(alpha, z);
        }

        if self.should_record(t) {
            self.records.push(Record {
                t,
                x: state.agents.iter().map(|a| a.x.clone()).collect(),
                y: state.ys(),
                f_zbar: self.config.objectives.evaluate_global(&zb),
                z: zs,
                z_bar: zb,
                bracket_z: bracket,
                ergodic_zbar: self.ergodic_zbar.point(),
                ergodic_z: self.ergodic_z.iter().map(ErgodicAverage::point).collect(),
                alpha_sum: self.ergodic_zbar.weight(),
            });
        }
    }

    /// Per-transition checks for the round `t -> t + 1`.
    fn transition(&mut self, event: &StepEvent, after: &NetworkState) {
        let t = event.t;
        let n = after.n() as f64;
        let residual =
            check_absolute_probability(&event.weights, &event.before.ys(), &after.ys()).unwrap_or(f64::INFINITY);
        self.inv.absolute_probability.update(residual, t);

        let before = bracket_z(&event.before);
        let now = bracket_z(after);
        let mut step_res: f64 = 0.0;
        let mut drift: f64 = 0.0;
        for k in 0..before.len() {
            let g_sum: f64 = event.subgradients.iter().map(|g| g[k]).sum();
            let decrement = event.alpha / n * g_sum;
            step_res = step_res.max((now[k] - before[k] + decrement).abs());
            self.predicted_bracket[k] -= decrement;
            drift = drift.max((now[k] - self.predicted_bracket[k]).abs());
        }
        self.inv.recursion_step.update(step_res, t);
        self.inv.recursion_drift.update(drift, t + 1);
        for g in &event.subgradients {
            self.inv.measured_g = self.inv.measured_g.max(norm(g));
        }
    }
}

/// Runs `T` rounds and returns the trace. Deterministic given the config.
pub fn run(config: &RunConfig) -> Result<RunTrace, EngineError> {
    let mut sim = Simulation::new(config)?;
    let initial = sim.state().clone();
    let mut rec = Recorder::new(config, &initial);
    rec.observe(&initial);
    for _ in 0..config.horizon {
        let event = sim.advance()?;
        rec.transition(&event, sim.state());
        rec.observe(sim.state());
    }
    Ok(RunTrace {
        n: config.n(),
        dim: config.dim(),
        horizon: config.horizon,
        initial,
        final_state: sim.state().clone(),
        records: rec.records,
        consensus_radius: rec.radius,
        invariants: rec.inv,
    })
}
