//! Fixtures shared by the benchmarks.

use hpush_core::engine::default_initial_points;
use hpush_core::{GraphSchedule, MixingSchedule, ObjectiveSet, RunConfig, StepSchedule, SwitchingSignal};

/// Ring rotation on `n` agents with out-degree weights, scalar anchored-l1
/// costs at `0, 1, ..., n-1`, fixed stepsize and fair-coin switching.
pub fn ring_config(n: usize, horizon: u64) -> RunConfig {
    let graphs = GraphSchedule::ring_rotation(n).expect("n >= 1");
    let anchors: Vec<f64> = (0..n).map(|i| i as f64).collect();
    RunConfig::new(
        MixingSchedule::out_degree(graphs),
        ObjectiveSet::scalar_l1(&anchors),
        StepSchedule::fixed(horizon).expect("positive horizon"),
        SwitchingSignal::Bernoulli { p: 0.5, seed: 7 },
        horizon,
        default_initial_points(n, 1, 11),
    )
}
