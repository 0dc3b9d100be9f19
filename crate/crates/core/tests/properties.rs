use hpush_core::analysis::{bound_rhs_time_varying, gap_vs_bound_report, product_gaps, BoundTarget};
use hpush_core::checks::{bound_params, mode_equivalence, run_suite, OptimumInput, Tolerances, Verdict};
use hpush_core::engine::default_initial_points;
use hpush_core::graph::{Digraph, GraphSchedule};
use hpush_core::objectives::{brute_force_optimum, Component};
use hpush_core::{run, MixingSchedule, ObjectiveSet, RunConfig, StepSchedule, SwitchingSignal};
use proptest::prelude::*;

fn random_config(n: usize, p: f64, seed: u64, horizon: u64, anchors: Vec<f64>) -> RunConfig {
    RunConfig::new(
        MixingSchedule::out_degree(GraphSchedule::random(n, p, seed, n).unwrap()),
        ObjectiveSet::scalar_l1(&anchors),
        StepSchedule::diminishing(1.0, 0.75).unwrap(),
        SwitchingSignal::Bernoulli { p: 0.5, seed: seed + 1 },
        horizon,
        default_initial_points(n, 1, seed),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold_on_random_schedules(
        n in 2usize..7,
        p in 0.0f64..0.6,
        seed in any::<u64>(),
        anchors in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let config = random_config(n, p, seed, 1_000, anchors[..n].to_vec());
        prop_assert!(config.validate().is_ok());
        let trace = run(&config).unwrap();
        let inv = &trace.invariants;
        prop_assert!(inv.absolute_probability.value <= 1e-12);
        prop_assert!(inv.mass.value <= 1e-10);
        prop_assert!(inv.recursion_drift.value <= 1e-9);
        prop_assert!(inv.hull.value <= 1e-9);
        prop_assert!(inv.y_min.value >= (n as f64).powi(-((n * n) as i32)));
        prop_assert!(inv.y_max.value <= n as f64 + 1e-10);
    }

    #[test]
    fn modes_agree_with_reference_forms(n in 1usize..6, seed in any::<u64>()) {
        let anchors: Vec<f64> = (0..n).map(|i| i as f64 - 1.5).collect();
        let config = random_config(n, 0.3, seed, 300, anchors);
        let dev = mode_equivalence(&config, 300).unwrap();
        prop_assert_eq!(dev.subgradient_push, 0.0);
        prop_assert_eq!(dev.push_subgradient, 0.0);
    }
}

#[test]
fn runs_are_deterministic_and_include_endpoints() {
    let config = random_config(4, 0.3, 17, 257, vec![0.0, 1.0, 2.0, 3.0]);
    let mut strided = config.clone();
    strided.stride = 50;
    let a = run(&strided).unwrap();
    assert_eq!(a, run(&strided).unwrap());
    let ts: Vec<u64> = a.records.iter().map(|r| r.t).collect();
    assert_eq!(ts, vec![0, 50, 100, 150, 200, 250, 256, 257]);
    assert_eq!(a.consensus_radius.len(), 258);
    assert_eq!(a.final_state, run(&config).unwrap().final_state);
}

#[test]
fn zero_horizon_keeps_the_initial_state() {
    let config = random_config(3, 0.5, 1, 0, vec![0.0, 1.0, 2.0]);
    let trace = run(&config).unwrap();
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.final_state, trace.initial);
}

#[test]
fn suite_flags_broken_weights() {
    let mut config = random_config(3, 0.4, 5, 300, vec![-1.0, 0.0, 1.0]);
    let tol = Tolerances::default();
    let clean = run_suite(&config, &run(&config).unwrap(), None, &tol);
    assert!(clean.passed());
    assert_eq!(clean.get("gap bound domination").unwrap().verdict, Verdict::Unavailable);

    config.fault = Some(hpush_core::WeightFault { step: 40, row: 0, col: 2, delta: 1e-7 });
    let broken = run_suite(&config, &run(&config).unwrap(), None, &tol);
    let failed: Vec<&str> = broken.failures().map(|r| r.name).collect();
    assert!(failed.contains(&"absolute probability sequence"), "{failed:?}");
    assert_eq!(broken.get("absolute probability sequence").unwrap().step, Some(40));
}

#[test]
fn diminishing_gaps_stay_under_the_bound_in_two_dimensions() {
    let n = 3;
    let objectives = ObjectiveSet::new(vec![
        Component::anchored_l1(vec![1.0, -1.0]),
        Component::max_affine(vec![vec![1.0, 0.0], vec![-1.0, 0.5]], vec![0.0, 1.0]).unwrap(),
        Component::anchored_l1(vec![-2.0, 0.5]),
    ])
    .unwrap();
    let opt = brute_force_optimum(&objectives, &[(-6.0, 6.0), (-6.0, 6.0)], 120).unwrap();
    let config = RunConfig::new(
        MixingSchedule::out_degree(GraphSchedule::ring_rotation(n).unwrap()),
        objectives,
        StepSchedule::diminishing(1.0, 1.0).unwrap(),
        SwitchingSignal::Periodic { patterns: vec![vec![1, 0], vec![0, 0, 1]] },
        3_000,
        default_initial_points(n, 2, 21),
    );
    config.validate().unwrap();
    let trace = run(&config).unwrap();
    let g = config.objectives.bound_g().unwrap();
    let params = bound_params(&config, g, opt.point.clone());
    let report = gap_vs_bound_report(&trace, &params, opt.value, &config.objectives, &config.stepsize);
    assert!(report.all_ok());
    assert!(report.min_gap >= -1e-9);
    let last = report.rows.last().unwrap();
    let direct = bound_rhs_time_varying(&params, &config.stepsize, 3_000, BoundTarget::Average).unwrap();
    assert_eq!(last.bound_zbar, Some(direct));

    let suite = run_suite(&config, &trace, Some(&OptimumInput { f_star: opt.value, z_star: opt.point }), &Tolerances::default());
    assert!(suite.passed(), "{:?}", suite.failures().collect::<Vec<_>>());
}

#[test]
fn periodic_schedule_contracts() {
    // Two graphs, each missing half of a 4-cycle; their union is the cycle.
    let g = |arcs: &[(usize, usize)]| Digraph::from_one_based(4, arcs.iter().copied()).unwrap();
    let schedule = GraphSchedule::periodic(vec![g(&[(1, 2), (3, 4)]), g(&[(2, 3), (4, 1)])], 2).unwrap();
    let mixing = MixingSchedule::out_degree(schedule);
    let params = hpush_core::BoundParams::new(4, 2, 1.0, &vec![vec![0.0]; 4], vec![0.0]);
    let gaps = product_gaps(&mixing, 3, 200).unwrap();
    for (lag, gap) in gaps.iter().enumerate() {
        assert!(*gap <= params.contraction_bound(lag as u64), "lag {lag}");
    }
    assert!(gaps[200] < 1e-6);
}
