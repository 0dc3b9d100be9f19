//! Heterogeneous push-sum subgradient optimization over time-varying
//! directed graphs.
//!
//! Each agent `i` holds `x_i` and a push-sum weight `y_i`. In every round
//! it evaluates a subgradient `g_i` of its own convex objective at
//! `z_i = x_i / y_i` and either takes the subgradient step before pushing
//! its state to its out-neighbors (`sigma_i = 1`) or pushes first and
//! corrects locally afterwards (`sigma_i = 0`). The choice may change
//! arbitrarily per agent and per round.
//!
//! * [`graph`]: digraphs, graph schedules and uniform strong connectivity.
//! * [`weights`]: column-stochastic mixing matrices.
//! * [`objectives`]: local objectives with bounded subgradients.
//! * [`engine`]: the iteration itself and the run driver.
//! * [`analysis`]: derived quantities and the gap bounds.
//! * [`reference`]: dense textbook forms of the special cases.
//! * [`checks`]: the invariant suite run against a trace.

pub mod analysis;
pub mod checks;
pub mod engine;
pub mod graph;
pub mod objectives;
pub mod reference;
pub mod weights;

use thiserror::Error;

pub use analysis::{BoundParams, BoundTarget, GapReport};
pub use engine::{
    run, AgentState, EngineError, NetworkState, RunConfig, RunTrace, StepSchedule, SwitchingSignal, WeightFault,
};
pub use graph::{Digraph, GraphSchedule};
pub use objectives::{Component, ObjectiveSet, Optimum};
pub use weights::{MixingSchedule, WeightMatrix, WeightRule};

/// Why a configuration was rejected before running.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("invalid configuration: {0}")]
    Shape(String),
    #[error("{0}")]
    Assumption2(String),
    /// Message names the violated weight condition and the step.
    #[error("{0}")]
    Assumption1(weights::WeightsError),
    #[error(
        "graph schedule is not uniformly strongly connected with window {window}{}",
        first_failure.map(|s| format!(" (first failing window starts at step {s})")).unwrap_or_default()
    )]
    Connectivity { window: usize, first_failure: Option<u64> },
}
