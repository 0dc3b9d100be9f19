//! Output files. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial file.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use hpush_core::analysis::GapReport;
use hpush_core::RunTrace;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), float)
}

fn opt_bool(v: Option<bool>) -> String {
    v.map_or_else(|| "NA".into(), |b| b.to_string())
}

pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.join(name).display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

/// `t,agent,x_1..x_d,y,z_1..z_d`, one row per recorded step and agent.
pub fn trace_csv(trace: &RunTrace) -> String {
    let d = trace.dim;
    let mut out = String::from("t,agent");
    for k in 1..=d {
        let _ = write!(out, ",x_{k}");
    }
    out.push_str(",y");
    for k in 1..=d {
        let _ = write!(out, ",z_{k}");
    }
    out.push('\n');
    for rec in &trace.records {
        for i in 0..trace.n {
            let _ = write!(out, "{},{}", rec.t, i + 1);
            for v in &rec.x[i] {
                let _ = write!(out, ",{}", float(*v));
            }
            let _ = write!(out, ",{}", float(rec.y[i]));
            for v in &rec.z[i] {
                let _ = write!(out, ",{}", float(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// `t,gap_zbar,bound_zbar,ok` then `gap_z_k,bound_z_k,ok_z_k` per agent.
/// Missing bounds print as `NA`.
pub fn bounds_csv(report: &GapReport, n: usize) -> String {
    let mut out = String::from("t,gap_zbar,bound_zbar,ok");
    for k in 1..=n {
        let _ = write!(out, ",gap_z_{k},bound_z_{k},ok_z_{k}");
    }
    out.push('\n');
    for row in &report.rows {
        let _ = write!(out, "{},{},{},{}", row.t, float(row.gap_zbar), opt_float(row.bound_zbar), opt_bool(row.ok_zbar));
        for k in 0..n {
            let _ = write!(
                out,
                ",{},{},{}",
                float(row.gap_agents[k]),
                opt_float(row.bound_agents[k]),
                opt_bool(row.ok_agents[k])
            );
        }
        out.push('\n');
    }
    out
}

/// Two columns, `log10_T,log10_gap`; horizons with a non-positive gap are left out.
pub fn rate_csv(points: &[(u64, f64)]) -> String {
    let mut out = String::from("log10_T,log10_gap\n");
    for &(t, gap) in points {
        if gap > 0.0 {
            let _ = writeln!(out, "{},{}", float((t as f64).log10()), float(gap.log10()));
        }
    }
    out
}
