//! Experiment configuration files (JSON).
//!
//! Agents and arcs are 1-based in the file. Nested seeds that are left out
//! fall back to the top-level `seed`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hpush_core::engine::default_initial_points;
use hpush_core::graph::{Digraph, GraphSchedule};
use hpush_core::objectives::{Component, ObjectiveSet, Optimum};
use hpush_core::weights::{MixingSchedule, WeightMatrix, WeightRule};
use hpush_core::{RunConfig, StepSchedule, SwitchingSignal, WeightFault};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub agents: usize,
    pub graph: GraphSpec,
    /// Claimed connectivity window `L`. Defaults: `n` for ring rotation and
    /// random graphs, the period for periodic schedules, 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub weights: WeightSpec,
    pub objectives: Vec<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimum: Option<Optimum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSpec>,
    pub stepsize: StepsizeSpec,
    pub switching: SwitchingSpec,
    pub horizon: u64,
    /// `x_i(0)`; drawn uniformly from `[-5, 5]^d` with `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub stride: u64,
    /// Run the invariant suite after `run` as well.
    #[serde(default)]
    pub verify: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_horizons: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    RingRotation,
    Complete,
    Static { arcs: Vec<[usize; 2]> },
    Periodic { graphs: Vec<Vec<[usize; 2]>> },
    Random { p: f64, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    #[default]
    OutDegree,
    /// Matrices keyed by step (decimal strings); taken modulo the period
    /// for periodic graph kinds.
    Custom { beta: f64, matrices: BTreeMap<String, Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// `[lo, hi]` per coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeSpec {
    /// `alpha(t) = a / (t + 1)^p`.
    Diminishing { a: f64, p: f64 },
    /// `alpha = 1 / sqrt(T)` with `T` the run horizon.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SwitchingSpec {
    Constant { value: u8 },
    Periodic { patterns: Vec<Vec<u8>> },
    Bernoulli { p: f64, seed: Option<u64> },
}

/// Adds `delta` to `W(step)[row][col]` (1-based) after validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub step: u64,
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn window(&self) -> usize {
        self.window.unwrap_or(match &self.graph {
            GraphSpec::RingRotation | GraphSpec::Random { .. } => self.agents,
            GraphSpec::Periodic { graphs } => graphs.len().max(1),
            GraphSpec::Complete | GraphSpec::Static { .. } => 1,
        })
    }

    pub fn graph_schedule(&self) -> Result<GraphSchedule, CliError> {
        let n = self.agents;
        let window = self.window();
        let digraph = |arcs: &[[usize; 2]]| Digraph::from_one_based(n, arcs.iter().map(|a| (a[0], a[1])));
        let schedule = match &self.graph {
            GraphSpec::RingRotation => match self.window {
                Some(w) if w != n => return Err(CliError::Config(format!("ring rotation has window {n}, config says {w}"))),
                _ => GraphSchedule::ring_rotation(n),
            },
            GraphSpec::Complete => Digraph::complete(n).and_then(|g| GraphSchedule::fixed(g, window)),
            GraphSpec::Static { arcs } => digraph(arcs).and_then(|g| GraphSchedule::fixed(g, window)),
            GraphSpec::Periodic { graphs } => graphs
                .iter()
                .map(|arcs| digraph(arcs))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|gs| GraphSchedule::periodic(gs, window)),
            GraphSpec::Random { p, seed } => GraphSchedule::random(n, *p, seed.unwrap_or(self.seed), window),
        };
        schedule.map_err(|e| CliError::Config(format!("graph: {e}")))
    }

    pub fn mixing(&self) -> Result<MixingSchedule, CliError> {
        let graphs = self.graph_schedule()?;
        let rule = match &self.weights {
            WeightSpec::OutDegree => WeightRule::OutDegree,
            WeightSpec::Custom { beta, matrices } => {
                let mut parsed = BTreeMap::new();
                for (key, rows) in matrices {
                    let step: u64 =
                        key.parse().map_err(|_| CliError::Config(format!("weights: step key {key:?} is not an integer")))?;
                    let w = WeightMatrix::from_rows(rows, *beta)
                        .map_err(|e| CliError::Config(format!("weights at step {step}: {e}")))?;
                    parsed.insert(step, w);
                }
                WeightRule::Custom { beta: *beta, matrices: parsed }
            }
        };
        Ok(MixingSchedule::new(graphs, rule))
    }

    pub fn objective_set(&self) -> Result<ObjectiveSet, CliError> {
        let set = ObjectiveSet::new(self.objectives.clone()).map_err(|e| CliError::Config(format!("objectives: {e}")))?;
        Ok(match &self.optimum {
            Some(o) => set.with_optimum(o.clone()),
            None => set,
        })
    }

    /// Not validated: an invalid diminishing range is reported by
    /// [`RunConfig::validate`].
    pub fn step_schedule(&self) -> StepSchedule {
        match self.stepsize {
            StepsizeSpec::Diminishing { a, p } => StepSchedule::Diminishing { a, p },
            StepsizeSpec::Fixed => StepSchedule::Fixed { horizon: self.horizon },
        }
    }

    pub fn switching_signal(&self) -> SwitchingSignal {
        match &self.switching {
            SwitchingSpec::Constant { value } => SwitchingSignal::Constant { value: *value },
            SwitchingSpec::Periodic { patterns } => SwitchingSignal::Periodic { patterns: patterns.clone() },
            SwitchingSpec::Bernoulli { p, seed } => SwitchingSignal::Bernoulli { p: *p, seed: seed.unwrap_or(self.seed) },
        }
    }

    pub fn initial_points(&self) -> Vec<Vec<f64>> {
        match &self.initial {
            Some(points) => points.clone(),
            None => {
                let d = self.objectives.first().map_or(1, Component::dim);
                default_initial_points(self.agents, d, self.seed)
            }
        }
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        if self.agents == 0 {
            return Err(CliError::Config("agents must be at least 1".into()));
        }
        let mut config = RunConfig::new(
            self.mixing()?,
            self.objective_set()?,
            self.step_schedule(),
            self.switching_signal(),
            self.horizon,
            self.initial_points(),
        );
        config.stride = self.stride;
        if let Some(f) = self.fault {
            let n = self.agents;
            if f.row == 0 || f.col == 0 || f.row > n || f.col > n {
                return Err(CliError::Config(format!("fault: entry ({}, {}) outside 1..={n}", f.row, f.col)));
            }
            config.fault = Some(WeightFault { step: f.step, row: f.row - 1, col: f.col - 1, delta: f.delta });
        }
        config.check_shapes().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    /// Search box and grid for the brute-force optimum: the configured
    /// ones, or anchors, centers and initial points padded by 10.
    pub fn oracle_box(&self, initial: &[Vec<f64>]) -> (Vec<(f64, f64)>, usize) {
        let d = self.objectives.first().map_or(1, Component::dim);
        let grid = self.oracle.as_ref().and_then(|o| o.grid).unwrap_or(match d {
            1 => 400,
            2 => 100,
            _ => 40,
        });
        if let Some(bounds) = self.oracle.as_ref().and_then(|o| o.bounds.as_ref()) {
            return (bounds.iter().map(|b| (b[0], b[1])).collect(), grid);
        }
        let mut points: Vec<&[f64]> = initial.iter().map(Vec::as_slice).collect();
        for c in &self.objectives {
            match c {
                Component::AnchoredL1 { anchor } => points.push(anchor),
                Component::Quadratic { center } => points.push(center),
                Component::MaxAffine { .. } => {}
            }
        }
        let bounds = (0..d)
            .map(|k| {
                let lo = points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                (lo - 10.0, hi + 10.0)
            })
            .collect();
        (bounds, grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "agents": 1,
        "graph": {"kind": "complete"},
        "objectives": [{"family": "anchored_l1", "anchor": [2.0]}],
        "stepsize": {"kind": "diminishing", "a": 1.0, "p": 1.0},
        "switching": {"kind": "constant", "value": 1},
        "horizon": 10
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(c.stride, 1);
        assert_eq!(c.seed, 0);
        assert_eq!(c.weights, WeightSpec::OutDegree);
        assert_eq!(c.window(), 1);
        let rc = c.run_config().unwrap();
        assert_eq!(rc.n(), 1);
        assert_eq!(rc.initial.len(), 1);
        rc.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("\"horizon\": 10", "\"horizon\": 10, \"horizn\": 3");
        assert!(serde_json::from_str::<ExperimentConfig>(&text).is_err());
    }

    #[test]
    fn objective_families_parse() {
        let text = r#"[
            {"family": "anchored_l1", "anchor": [1.0, 2.0]},
            {"family": "max_affine", "slopes": [[1.0, 0.0], [-1.0, 0.5]], "intercepts": [0.0, 1.0]},
            {"family": "quadratic", "center": [0.0, 0.0]}
        ]"#;
        let cs: Vec<Component> = serde_json::from_str(text).unwrap();
        assert_eq!(cs.len(), 3);
        assert!(ObjectiveSet::new(cs).unwrap().bound_g().is_none());
    }

    #[test]
    fn nested_seeds_fall_back_to_top_level() {
        let mut c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        c.seed = 42;
        c.switching = SwitchingSpec::Bernoulli { p: 0.5, seed: None };
        assert_eq!(c.switching_signal(), SwitchingSignal::Bernoulli { p: 0.5, seed: 42 });
        c.switching = SwitchingSpec::Bernoulli { p: 0.5, seed: Some(3) };
        assert_eq!(c.switching_signal(), SwitchingSignal::Bernoulli { p: 0.5, seed: 3 });
    }

    #[test]
    fn custom_weights_with_bad_key() {
        let mut c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        c.weights = WeightSpec::Custom { beta: 1.0, matrices: BTreeMap::from([("x".into(), vec![vec![1.0]])]) };
        assert!(matches!(c.run_config(), Err(CliError::Config(_))));
    }

    #[test]
    fn ring_window_must_match() {
        let mut c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        c.graph = GraphSpec::RingRotation;
        c.window = Some(3);
        assert!(c.graph_schedule().is_err());
    }

    #[test]
    fn oracle_box_pads_anchors_and_starts() {
        let c: ExperimentConfig = serde_json::from_str(MINIMAL).unwrap();
        let (bounds, grid) = c.oracle_box(&[vec![-1.0]]);
        assert_eq!(bounds, vec![(-11.0, 12.0)]);
        assert_eq!(grid, 400);
    }
}
