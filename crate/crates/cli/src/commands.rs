use std::path::PathBuf;

use hpush_core::analysis::{gap_vs_bound_report, rate_fit, BoundParams, FixedHorizonCheck, GapReport, RateFit};
use hpush_core::checks::{bound_params, run_suite, CheckResult, OptimumInput, Tolerances, Verdict};
use hpush_core::engine::InvariantSummary;
use hpush_core::graph::Certification;
use hpush_core::objectives::brute_force_optimum;
use hpush_core::{run, RunConfig, RunTrace, StepSchedule};
use serde::Serialize;

use crate::config::{ExperimentConfig, StepsizeSpec};
use crate::output::{bounds_csv, rate_csv, trace_csv, write_atomic, write_json};
use crate::CliError;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "HPUSH_OUT_DIR";

/// Command-line options shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stride: Option<u64>,
    pub allow_uncertified: bool,
    /// Sweep only; falls back to `sweep_horizons` in the config.
    pub horizons: Option<Vec<u64>>,
}

struct Prepared {
    experiment: ExperimentConfig,
    config: RunConfig,
    certification: Option<Certification>,
    /// Validation failure that was overridden by `--allow-uncertified`.
    overridden: Option<String>,
    out_dir: PathBuf,
}

fn prepare(opts: &Options) -> Result<Prepared, CliError> {
    let mut experiment = ExperimentConfig::load(&opts.config)?;
    if let Some(seed) = opts.seed {
        experiment.seed = seed;
    }
    if let Some(stride) = opts.stride {
        experiment.stride = stride;
    }
    let out_dir = opts
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| experiment.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    prepare_experiment(experiment, opts.allow_uncertified, out_dir)
}

fn prepare_experiment(experiment: ExperimentConfig, allow_uncertified: bool, out_dir: PathBuf) -> Result<Prepared, CliError> {
    let config = experiment.run_config()?;
    let (certification, overridden) = match config.validate() {
        Ok(cert) => (Some(cert), None),
        Err(e @ hpush_core::ValidationError::Shape(_)) => return Err(CliError::Invalid(e)),
        Err(e) if allow_uncertified => {
            eprintln!("warning: {e}; continuing because --allow-uncertified is set, outputs are marked uncertified");
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(CliError::Invalid(e)),
    };
    Ok(Prepared { experiment, config, certification, overridden, out_dir })
}

#[derive(Debug, Clone, Serialize)]
struct OptimumInfo {
    source: &'static str,
    point: Vec<f64>,
    value: f64,
}

/// `optimum` from the config if given, otherwise a brute-force grid search
/// (dimension at most 3).
fn resolve_optimum(experiment: &ExperimentConfig, config: &RunConfig) -> Option<OptimumInfo> {
    if let Some(hint) = config.objectives.optimum_hint() {
        return Some(OptimumInfo { source: "config", point: hint.point.clone(), value: hint.value });
    }
    let (bounds, grid) = experiment.oracle_box(&config.initial);
    brute_force_optimum(&config.objectives, &bounds, grid)
        .ok()
        .map(|o| OptimumInfo { source: "brute_force", point: o.point, value: o.value })
}

#[derive(Debug, Serialize)]
struct BoundSummary {
    available: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    all_ok: bool,
    final_bound_zbar: Option<f64>,
    fixed_horizon: Option<FixedHorizonCheck>,
}

#[derive(Debug, Serialize)]
struct FinalState {
    t: u64,
    z_bar: Vec<f64>,
    f_zbar: f64,
    ergodic_zbar: Vec<f64>,
    gap_ergodic_zbar: Option<f64>,
    gap_ergodic_z: Option<Vec<f64>>,
    consensus_radius: f64,
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    command: &'static str,
    certified: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    uncertified_reasons: Vec<String>,
    config: &'a ExperimentConfig,
    certification: Option<&'a Certification>,
    /// Arcs (1-based) of the graphs in the first window.
    graphs: Vec<Vec<[usize; 2]>>,
    eta: f64,
    mu: f64,
    one_minus_mu: f64,
    c: f64,
    g: f64,
    g_source: &'static str,
    optimum: Option<OptimumInfo>,
    #[serde(rename = "final")]
    final_state: FinalState,
    residuals: &'a InvariantSummary,
    bounds: Option<BoundSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<Vec<CheckResult>>,
}

struct Outcome {
    trace: RunTrace,
    optimum: Option<OptimumInfo>,
    params: BoundParams,
    report: Option<GapReport>,
    g_measured: bool,
}

fn execute(p: &Prepared) -> Result<Outcome, CliError> {
    let trace = run(&p.config).map_err(CliError::Runtime)?;
    let optimum = resolve_optimum(&p.experiment, &p.config);
    let known_g = p.config.objectives.bound_g();
    let g = known_g.unwrap_or(trace.invariants.measured_g);
    let z_star = optimum.as_ref().map_or_else(|| vec![0.0; p.config.dim()], |o| o.point.clone());
    let params = bound_params(&p.config, g, z_star);
    let report = optimum
        .as_ref()
        .map(|o| gap_vs_bound_report(&trace, &params, o.value, &p.config.objectives, &p.config.stepsize));
    Ok(Outcome { trace, optimum, params, report, g_measured: known_g.is_none() })
}

fn summarize<'a>(
    command: &'static str,
    p: &'a Prepared,
    o: &'a Outcome,
    checks: Option<Vec<CheckResult>>,
) -> RunSummary<'a> {
    let mut reasons = Vec::new();
    if let Some(msg) = &p.overridden {
        reasons.push(msg.clone());
    }
    if p.config.fault.is_some() {
        reasons.push("weight fault injected".into());
    }
    if o.g_measured {
        reasons.push("subgradient bound G measured along the trajectory".into());
    }
    let last = o.trace.records.last().expect("trace always holds t = 0");
    let f_star = o.optimum.as_ref().map(|opt| opt.value);
    let window = p.config.mixing.graphs().claimed_window() as u64;
    let graphs = (0..window).map(|t| p.config.mixing.graph_at(t).one_based_arcs()).collect();
    let bounds = o.report.as_ref().map(|r| BoundSummary {
        available: r.unavailable.is_none(),
        reason: r.unavailable.clone(),
        all_ok: r.all_ok(),
        final_bound_zbar: r.rows.last().and_then(|row| row.bound_zbar),
        fixed_horizon: r.fixed.clone(),
    });
    RunSummary {
        command,
        certified: reasons.is_empty(),
        uncertified_reasons: reasons,
        config: &p.experiment,
        certification: p.certification.as_ref(),
        graphs,
        eta: o.params.eta,
        mu: o.params.mu,
        one_minus_mu: o.params.one_minus_mu,
        c: o.params.c,
        g: o.params.g,
        g_source: if o.g_measured { "measured" } else { "objectives" },
        optimum: o.optimum.clone(),
        final_state: FinalState {
            t: last.t,
            z_bar: last.z_bar.clone(),
            f_zbar: last.f_zbar,
            ergodic_zbar: last.ergodic_zbar.clone(),
            gap_ergodic_zbar: f_star.map(|f| p.config.objectives.evaluate_global(&last.ergodic_zbar) - f),
            gap_ergodic_z: f_star
                .map(|f| last.ergodic_z.iter().map(|z| p.config.objectives.evaluate_global(z) - f).collect()),
            consensus_radius: *o.trace.consensus_radius.last().expect("radius at t = 0"),
        },
        residuals: &o.trace.invariants,
        bounds,
        checks,
    }
}

fn write_run_outputs(p: &Prepared, o: &Outcome, summary: &RunSummary) -> Result<(), CliError> {
    write_atomic(&p.out_dir, "trace.csv", trace_csv(&o.trace).as_bytes())?;
    if let Some(report) = &o.report {
        write_atomic(&p.out_dir, "bounds.csv", bounds_csv(report, o.trace.n).as_bytes())?;
    }
    write_json(&p.out_dir, "summary.json", summary)
}

fn suite(p: &Prepared, o: &Outcome) -> Vec<CheckResult> {
    let optimum = o.optimum.as_ref().map(|opt| OptimumInput { f_star: opt.value, z_star: opt.point.clone() });
    run_suite(&p.config, &o.trace, optimum.as_ref(), &Tolerances::default()).results
}

fn failure(results: &[CheckResult]) -> Option<CliError> {
    let failed: Vec<String> = results
        .iter()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| match r.step {
            Some(s) => format!("{} (step {s})", r.name),
            None => r.name.to_string(),
        })
        .collect();
    (!failed.is_empty()).then(|| CliError::Verification(failed.join(", ")))
}

pub fn print_table(results: &[CheckResult]) {
    println!("{:<32} {:<12} {:>12} {:>12}  detail", "check", "result", "value", "limit");
    for r in results {
        let verdict = match r.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Unavailable => "unavailable",
        };
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
        println!("{:<32} {:<12} {:>12} {:>12}  {}", r.name, verdict, num(r.value), num(r.limit), r.detail);
    }
}

/// `run`: simulate, write `trace.csv`, `bounds.csv` and `summary.json`.
/// With `verify: true` in the config the invariant suite runs as well.
pub fn cmd_run(opts: &Options) -> Result<(), CliError> {
    let p = prepare(opts)?;
    let o = execute(&p)?;
    let checks = p.experiment.verify.then(|| suite(&p, &o));
    let summary = summarize("run", &p, &o, checks.clone());
    write_run_outputs(&p, &o, &summary)?;
    println!("wrote {}", p.out_dir.display());
    match checks.as_deref().and_then(failure) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// `verify`: `run` plus the full invariant suite, printed as a table.
pub fn cmd_verify(opts: &Options) -> Result<(), CliError> {
    let p = prepare(opts)?;
    let o = execute(&p)?;
    let checks = suite(&p, &o);
    print_table(&checks);
    let summary = summarize("verify", &p, &o, Some(checks.clone()));
    write_run_outputs(&p, &o, &summary)?;
    match failure(&checks) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub horizon: u64,
    pub gap_zbar: f64,
    pub gap_agents: Vec<f64>,
    pub bound_zbar: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub command: &'static str,
    pub certified: bool,
    pub f_star: f64,
    pub optimum_source: &'static str,
    pub points: Vec<SweepPoint>,
    pub fit: RateFit,
}

/// `sweep`: one run per horizon `T` with `alpha = 1/sqrt(T)`, the gap of the
/// plain `T`-step average of `zbar`, and the log-log slope over horizons.
pub fn cmd_sweep(opts: &Options) -> Result<SweepSummary, CliError> {
    let base = prepare(opts)?;
    let horizons = opts.horizons.clone().unwrap_or_else(|| base.experiment.sweep_horizons.clone());
    if horizons.len() < 3 {
        return Err(CliError::Config(format!("sweep needs at least 3 horizons, got {}", horizons.len())));
    }
    if horizons.contains(&0) {
        return Err(CliError::Config("sweep horizons must be positive".into()));
    }
    let optimum = resolve_optimum(&base.experiment, &base.config)
        .ok_or_else(|| CliError::Config("sweep needs an optimum: give one in the config or use d <= 3".into()))?;

    let prepared = horizons
        .iter()
        .map(|&t| {
            let mut e = base.experiment.clone();
            e.horizon = t;
            e.stepsize = StepsizeSpec::Fixed;
            e.stride = t;
            prepare_experiment(e, opts.allow_uncertified, base.out_dir.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Result<SweepPoint, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = prepared
            .iter()
            .map(|p| scope.spawn(|| sweep_point(p, &optimum)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let points = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.horizon as f64, p.gap_zbar)).collect();
    let fit = rate_fit(&pairs).map_err(|e| CliError::Config(e.to_string()))?;
    let rate: Vec<(u64, f64)> = points.iter().map(|p| (p.horizon, p.gap_zbar)).collect();
    write_atomic(&base.out_dir, "rate.csv", rate_csv(&rate).as_bytes())?;
    let summary = SweepSummary {
        command: "sweep",
        certified: prepared.iter().all(|p| p.overridden.is_none() && p.config.fault.is_none())
            && base.config.objectives.bound_g().is_some(),
        f_star: optimum.value,
        optimum_source: optimum.source,
        points,
        fit,
    };
    write_json(&base.out_dir, "summary.json", &summary)?;
    for p in &summary.points {
        println!("T = {:>8}  gap = {:.6e}", p.horizon, p.gap_zbar);
    }
    println!("slope = {:.4}", summary.fit.slope);
    Ok(summary)
}

fn sweep_point(p: &Prepared, optimum: &OptimumInfo) -> Result<SweepPoint, CliError> {
    let trace = run(&p.config).map_err(CliError::Runtime)?;
    let horizon = p.config.horizon;
    let rec = trace.record_at(horizon - 1).expect("T - 1 is always recorded");
    let obj = &p.config.objectives;
    let g = obj.bound_g().unwrap_or(trace.invariants.measured_g);
    let params = bound_params(&p.config, g, optimum.point.clone());
    let bound_zbar = match p.config.stepsize {
        StepSchedule::Fixed { horizon } => {
            hpush_core::analysis::bound_rhs_fixed(&params, horizon, hpush_core::BoundTarget::Average).ok()
        }
        StepSchedule::Diminishing { .. } => None,
    };
    Ok(SweepPoint {
        horizon,
        gap_zbar: obj.evaluate_global(&rec.ergodic_zbar) - optimum.value,
        gap_agents: rec.ergodic_z.iter().map(|z| obj.evaluate_global(z) - optimum.value).collect(),
        bound_zbar,
    })
}
