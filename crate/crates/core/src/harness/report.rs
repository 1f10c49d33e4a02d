//! Summary, time-series and coverage tables plus run metadata.
//!
//! Everything is written as comma-separated text with fixed float formatting
//! so that identical summaries give identical bytes.

use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use super::config::ExperimentConfig;
use super::sim::FailureMode;
use super::stats::MethodSummary;
use super::Method;
use crate::error::{Error, Result};

pub fn summary_file_name(method: Method) -> String {
    format!("summary_{method}.json")
}

pub fn save_summary(s: &MethodSummary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(summary_file_name(s.method));
    let text = serde_json::to_string_pretty(s).map_err(|e| Error::parse(&path, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_summary(path: &Path) -> Result<MethodSummary> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |v| format!("{v:.6}"))
}

pub fn summary_table(summaries: &[MethodSummary]) -> String {
    let mut out = String::from(
        "method,trials,successes,success_rate,wilson_low,wilson_high,mean_margin,\
         e_L_mean,e_L_std,e_alpha_mean,e_alpha_std,e_L_mean_all,e_alpha_mean_all,",
    );
    let modes: Vec<&str> = FailureMode::ALL.iter().map(|m| m.name()).collect();
    out.push_str(&modes.join(","));
    out.push_str(",infeasible_share\n");
    for s in summaries {
        let t = &s.tracking_successful;
        let a = &s.tracking_all;
        let _ = write!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.method,
            s.trials,
            s.successes,
            s.success_rate,
            s.wilson_low,
            s.wilson_high,
            s.mean_margin,
            t.range_mean,
            t.range_std,
            t.bearing_mean,
            t.bearing_std,
            a.range_mean,
            a.bearing_mean,
        );
        for m in FailureMode::ALL {
            let _ = write!(out, ",{}", s.failures.get(m));
        }
        let _ = writeln!(out, ",{:.6}", s.infeasible_share);
    }
    out
}

pub fn timeseries_table(s: &MethodSummary) -> String {
    let mut out = String::from("time,runs,e_L,e_alpha,abs_e_L,abs_e_alpha,margin\n");
    for p in &s.series {
        let _ = writeln!(
            out,
            "{:.3},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            p.time, p.runs, p.range_error, p.bearing_error, p.abs_range_error, p.abs_bearing_error, p.margin
        );
    }
    out
}

pub fn coverage_table(summaries: &[MethodSummary]) -> String {
    let mut out =
        String::from("method,group,delta,target,quantile,visits,covered,coverage,lower_bound,pass\n");
    for s in summaries {
        for c in &s.coverage {
            let _ = writeln!(
                out,
                "{},B{},{:.4},{:.4},{},{},{},{},{},{}",
                s.method,
                c.group,
                c.delta,
                1.0 - c.delta,
                opt(c.quantile),
                c.visits,
                c.covered,
                c.coverage.map_or_else(|| "na".into(), |v| format!("{v:.6}")),
                c.lower_bound.map_or_else(|| "na".into(), |v| format!("{v:.6}")),
                c.passes()
            );
        }
    }
    out
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    seed: u64,
    dt: f64,
    horizon: f64,
    steps: usize,
    calibration_runs: usize,
    methods: Vec<MethodLine<'a>>,
    union_bound: f64,
    input_box: crate::qp::InputBox,
    bearing_frame: crate::dynamics::BearingFrame,
}

#[derive(Serialize)]
struct MethodLine<'a> {
    method: &'a str,
    trials: usize,
    success_rate: f64,
    wilson_low: f64,
    union_bound: f64,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `summary.csv`, `coverage.csv`, one `timeseries_<method>.csv` per
/// method and `metadata.json` into `dir`.
pub fn write_report(summaries: &[MethodSummary], cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    if summaries.is_empty() {
        return Err(Error::Config("report needs at least one summary".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("summary.csv"), &summary_table(summaries))?;
    write(&dir.join("coverage.csv"), &coverage_table(summaries))?;
    for s in summaries {
        write(&dir.join(format!("timeseries_{}.csv", s.method)), &timeseries_table(s))?;
    }
    let union_bound = summaries[0].union_bound;
    let meta = Metadata {
        config_hash: &summaries[0].config_hash,
        seed: summaries[0].seed,
        dt: summaries[0].dt,
        horizon: cfg.horizon,
        steps: cfg.steps(),
        calibration_runs: cfg.run.calibration_runs,
        methods: summaries
            .iter()
            .map(|s| MethodLine {
                method: s.method.name(),
                trials: s.trials,
                success_rate: s.success_rate,
                wilson_low: s.wilson_low,
                union_bound: s.union_bound,
            })
            .collect(),
        union_bound,
        input_box: cfg.input_box,
        bearing_frame: cfg.kinematics.bearing_frame,
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::parse(&path, e))?;
    write(&path, &(text + "\n"))
}
