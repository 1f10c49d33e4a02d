//! Calibration and evaluation campaigns and their on-disk artifacts.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::config::ExperimentConfig;
use super::sim::{simulate_trial, TrialOutcome};
use super::{report, stats, Method};
use crate::conformal::{calibrate, conformal_quantile, trajectory_scores, QuantileTable};
use crate::error::{Error, Result};
use crate::filter::{MarginPolicy, SafetyFilter};
use crate::par::{map_trials, Threads};

const CALIBRATION_STREAM: u64 = 0xCA11_B8A7_E000_0001;
const EVALUATION_STREAM: u64 = 0xE7A1_0A7E_0000_0002;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index` in the stream `stream` of master seed `seed`.
pub fn trial_seed(seed: u64, stream: u64, index: usize) -> u64 {
    splitmix64(seed ^ stream) ^ index as u64
}

fn build_filter(cfg: &ExperimentConfig, policy: MarginPolicy) -> Result<SafetyFilter> {
    SafetyFilter::new(
        cfg.gains,
        cfg.safe_set.clone(),
        cfg.kinematics,
        cfg.input_box,
        cfg.taxonomy.clone(),
        &cfg.norm_weights,
        policy,
    )
}

/// Radii of the two single-radius baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub config_hash: String,
    pub low_risk_delta: f64,
    pub high_risk_delta: f64,
    /// Calibrated on the lowest-risk group's scores.
    pub global_low: f64,
    /// Calibrated on the highest-risk group's scores.
    pub global_high: f64,
    pub low_risk_count: usize,
    pub high_risk_count: usize,
}

#[derive(Debug, Clone)]
pub struct CalibrationArtifacts {
    pub table: QuantileTable,
    pub baselines: Baselines,
    /// Trajectory-level scores per group, in trial order.
    pub scores: Vec<Vec<f64>>,
    pub outcomes: Vec<TrialOutcome>,
}

pub const TABLE_FILE: &str = "quantile_table.toml";
pub const BASELINES_FILE: &str = "baselines.toml";
pub const SCORES_FILE: &str = "calibration_scores.csv";

impl CalibrationArtifacts {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.table.save(&dir.join(TABLE_FILE))?;
        let path = dir.join(BASELINES_FILE);
        let text = toml::to_string_pretty(&self.baselines).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let mut csv = String::from("group,score\n");
        for (g, s) in self.scores.iter().enumerate() {
            for v in s {
                csv.push_str(&format!("B{},{v}\n", g + 1));
            }
        }
        let path = dir.join(SCORES_FILE);
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
    }

    /// Load the table and baselines written by [`Self::save`].
    pub fn load(dir: &Path) -> Result<(QuantileTable, Baselines)> {
        let table = QuantileTable::load(&dir.join(TABLE_FILE))?;
        let path = dir.join(BASELINES_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let baselines = toml::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        Ok((table, baselines))
    }
}

/// Simulate `n_runs` trajectories under the plain CBF and calibrate on them.
pub fn run_calibration_campaign(
    cfg: &ExperimentConfig,
    n_runs: usize,
    threads: Threads,
) -> Result<CalibrationArtifacts> {
    cfg.validate()?;
    let filter = build_filter(cfg, MarginPolicy::Zero)?;
    let results = map_trials(n_runs, threads, |i| {
        simulate_trial(cfg, &filter, i, trial_seed(cfg.run.seed, CALIBRATION_STREAM, i), true)
    });
    let mut outcomes = Vec::with_capacity(n_runs);
    let mut records = Vec::with_capacity(n_runs);
    for r in results {
        outcomes.push(r.outcome);
        records.extend(r.record);
    }
    let mut table = calibrate(&records, &cfg.taxonomy, cfg.epsilon, &cfg.norm_weights)?;
    let hash = cfg.hash();
    table.config_hash = hash.clone();
    let scores = trajectory_scores(&records, &cfg.taxonomy, &cfg.norm_weights);
    let last = scores.len() - 1;
    let quantile = |g: usize, delta: f64| {
        conformal_quantile(&scores[g], delta).map_err(|e| match e {
            Error::EmptyScores => Error::EmptyGroup { group: g + 1 },
            other => other,
        })
    };
    let baselines = Baselines {
        config_hash: hash,
        low_risk_delta: cfg.baselines.low_risk_delta,
        high_risk_delta: cfg.baselines.high_risk_delta,
        global_low: quantile(last, cfg.baselines.low_risk_delta)?,
        global_high: quantile(0, cfg.baselines.high_risk_delta)?,
        low_risk_count: scores[last].len(),
        high_risk_count: scores[0].len(),
    };
    Ok(CalibrationArtifacts {
        table,
        baselines,
        scores,
        outcomes,
    })
}

/// Success-conditioned per-step sums.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesSums {
    pub runs: Vec<usize>,
    pub range: Vec<f64>,
    pub bearing: Vec<f64>,
    pub abs_range: Vec<f64>,
    pub abs_bearing: Vec<f64>,
    pub margin: Vec<f64>,
}

impl SeriesSums {
    fn with_len(n: usize) -> Self {
        Self {
            runs: vec![0; n],
            range: vec![0.0; n],
            bearing: vec![0.0; n],
            abs_range: vec![0.0; n],
            abs_bearing: vec![0.0; n],
            margin: vec![0.0; n],
        }
    }

    fn add(&mut self, series: &[[f64; 3]]) {
        for (k, s) in series.iter().enumerate().take(self.runs.len()) {
            self.runs[k] += 1;
            self.range[k] += s[0];
            self.bearing[k] += s[1];
            self.abs_range[k] += s[0].abs();
            self.abs_bearing[k] += s[1].abs();
            self.margin[k] += s[2];
        }
    }
}

/// Outcomes of one method's Monte Carlo campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub method: Method,
    pub config_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub deltas: Vec<f64>,
    /// Risk-aware radii the coverage is checked against; `None` when unbounded.
    pub quantiles: Vec<Option<f64>>,
    pub outcomes: Vec<TrialOutcome>,
    pub series: SeriesSums,
}

impl EvaluationRun {
    pub fn file_name(method: Method) -> String {
        format!("outcomes_{method}.json")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::file_name(self.method));
        let text = serde_json::to_string(self).map_err(|e| Error::parse(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

fn check_hash(expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(Error::HashMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

pub fn policy_for(method: Method, table: &QuantileTable, baselines: &Baselines) -> MarginPolicy {
    match method {
        Method::Nominal => MarginPolicy::Zero,
        Method::GlobalLow => MarginPolicy::Constant(baselines.global_low),
        Method::GlobalHigh => MarginPolicy::Constant(baselines.global_high),
        Method::RiskAware => MarginPolicy::RiskAware(table.clone()),
    }
}

/// Evaluate one method on fresh trajectories.
///
/// Every method sees the same per-trial seeds, so initial states and the
/// first perception draws are shared across methods.
pub fn run_evaluation(
    cfg: &ExperimentConfig,
    table: &QuantileTable,
    baselines: &Baselines,
    method: Method,
    n_trials: usize,
    threads: Threads,
) -> Result<EvaluationRun> {
    cfg.validate()?;
    let hash = cfg.hash();
    check_hash(&table.config_hash, &hash)?;
    check_hash(&baselines.config_hash, &hash)?;
    let filter = build_filter(cfg, policy_for(method, table, baselines))?;
    let results = map_trials(n_trials, threads, |i| {
        simulate_trial(cfg, &filter, i, trial_seed(cfg.run.seed, EVALUATION_STREAM, i), false)
    });
    let mut series = SeriesSums::with_len(cfg.steps());
    let mut outcomes = Vec::with_capacity(n_trials);
    for r in results {
        if r.outcome.success {
            series.add(&r.series);
        }
        outcomes.push(r.outcome);
    }
    Ok(EvaluationRun {
        method,
        config_hash: hash,
        seed: cfg.run.seed,
        dt: cfg.dt,
        deltas: table.deltas.clone(),
        quantiles: table
            .quantiles
            .iter()
            .map(|q| q.is_finite().then_some(*q))
            .collect(),
        outcomes,
        series,
    })
}

/// Calibrate, evaluate every method, summarize and write all report files.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    out: &Path,
    threads: Threads,
) -> Result<Vec<stats::MethodSummary>> {
    let cal = run_calibration_campaign(cfg, cfg.run.calibration_runs, threads)?;
    cal.save(out)?;
    let mut summaries = Vec::new();
    for method in Method::ALL {
        let run = run_evaluation(cfg, &cal.table, &cal.baselines, method, cfg.run.trials, threads)?;
        run.save(out)?;
        let summary = stats::summarize(&run);
        report::save_summary(&summary, out)?;
        summaries.push(summary);
    }
    report::write_report(&summaries, cfg, out)?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.horizon = 10.0;
        cfg
    }

    #[test]
    fn trial_seeds_differ_between_streams() {
        assert_ne!(trial_seed(1, CALIBRATION_STREAM, 0), trial_seed(1, EVALUATION_STREAM, 0));
        assert_ne!(trial_seed(1, CALIBRATION_STREAM, 0), trial_seed(1, CALIBRATION_STREAM, 1));
        assert_ne!(trial_seed(1, CALIBRATION_STREAM, 0), trial_seed(2, CALIBRATION_STREAM, 0));
    }

    #[test]
    fn two_runs_leave_the_strict_group_unbounded() {
        let mut cfg = small();
        cfg.schedule = super::super::LeaderSchedule::constant(0.3, 0.3);
        let cal = run_calibration_campaign(&cfg, 2, Some(1)).unwrap();
        assert!(cal.table.quantiles[0].is_infinite());
        assert!(!cal.table.warnings.is_empty());
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let cfg = small();
        let table = QuantileTable::new(
            &cfg.taxonomy,
            vec![0.3, 0.2, 0.1],
            cfg.epsilon,
            cfg.norm_weights,
            vec![10, 10, 10],
        )
        .unwrap();
        let baselines = Baselines {
            config_hash: cfg.hash(),
            low_risk_delta: 0.45,
            high_risk_delta: 0.01,
            global_low: 0.1,
            global_high: 0.3,
            low_risk_count: 10,
            high_risk_count: 10,
        };
        let r = run_evaluation(&cfg, &table, &baselines, Method::RiskAware, 1, None);
        assert!(matches!(r, Err(Error::HashMismatch { .. })));
    }

    #[test]
    fn zero_trials_is_an_empty_run() {
        let cfg = small();
        let mut table = QuantileTable::new(
            &cfg.taxonomy,
            vec![0.3, 0.2, 0.1],
            cfg.epsilon,
            cfg.norm_weights,
            vec![10, 10, 10],
        )
        .unwrap();
        table.config_hash = cfg.hash();
        let baselines = Baselines {
            config_hash: cfg.hash(),
            low_risk_delta: 0.45,
            high_risk_delta: 0.01,
            global_low: 0.1,
            global_high: 0.3,
            low_risk_count: 10,
            high_risk_count: 10,
        };
        let run = run_evaluation(&cfg, &table, &baselines, Method::Nominal, 0, None).unwrap();
        assert!(run.outcomes.is_empty());
        let s = stats::summarize(&run);
        assert_eq!(s.trials, 0);
        assert_eq!(s.success_rate, 0.0);
        assert!(s.series.is_empty());
    }
}
