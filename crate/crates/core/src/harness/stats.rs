//! Monte Carlo summaries: success rates with Wilson intervals, tracking
//! statistics, margins, failure histograms and group coverage.

use serde::{Deserialize, Serialize};

use super::campaign::EvaluationRun;
use super::sim::{FailureMode, TrackingSums};
use super::Method;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
/// The vacuous interval `(0, 1)` is returned for `n = 0`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Pooled two-proportion z statistic for `p1 > p2`.
pub fn two_proportion_z(s1: usize, n1: usize, s2: usize, n2: usize) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let (p1, p2) = (s1 as f64 / n1 as f64, s2 as f64 / n2 as f64);
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        return if p1 > p2 { f64::INFINITY } else { 0.0 };
    }
    (p1 - p2) / se
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureCounts {
    pub fov_violation: usize,
    pub range_violation: usize,
    pub qp_infeasible: usize,
    pub degenerate: usize,
}

impl FailureCounts {
    pub fn get(&self, mode: FailureMode) -> usize {
        match mode {
            FailureMode::FovViolation => self.fov_violation,
            FailureMode::RangeViolation => self.range_violation,
            FailureMode::QpInfeasible => self.qp_infeasible,
            FailureMode::Degenerate => self.degenerate,
        }
    }

    fn bump(&mut self, mode: FailureMode) {
        match mode {
            FailureMode::FovViolation => self.fov_violation += 1,
            FailureMode::RangeViolation => self.range_violation += 1,
            FailureMode::QpInfeasible => self.qp_infeasible += 1,
            FailureMode::Degenerate => self.degenerate += 1,
        }
    }
}

/// Step-pooled absolute tracking errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub trials: usize,
    pub steps: usize,
    pub range_mean: f64,
    pub range_std: f64,
    pub range_max: f64,
    pub bearing_mean: f64,
    pub bearing_std: f64,
    pub bearing_max: f64,
}

impl ErrorStats {
    fn from_sums(trials: usize, s: &TrackingSums) -> Self {
        if s.steps == 0 {
            return Self {
                trials,
                ..Default::default()
            };
        }
        let n = s.steps as f64;
        let (rm, bm) = (s.range_abs / n, s.bearing_abs / n);
        Self {
            trials,
            steps: s.steps,
            range_mean: rm,
            range_std: (s.range_sq / n - rm * rm).max(0.0).sqrt(),
            range_max: s.range_max,
            bearing_mean: bm,
            bearing_std: (s.bearing_sq / n - bm * bm).max(0.0).sqrt(),
            bearing_max: s.bearing_max,
        }
    }
}

/// Trajectory-level coverage of one group's calibrated radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoverage {
    /// One-based group label.
    pub group: usize,
    pub delta: f64,
    /// `None` when the radius is unbounded.
    pub quantile: Option<f64>,
    /// Trajectories visiting the group.
    pub visits: usize,
    pub covered: usize,
    pub coverage: Option<f64>,
    /// `1 - delta - 2 sqrt(delta (1 - delta) / visits)`.
    pub lower_bound: Option<f64>,
}

impl GroupCoverage {
    pub fn passes(&self) -> bool {
        match (self.coverage, self.lower_bound) {
            (Some(c), Some(lb)) => c >= lb,
            _ => true,
        }
    }
}

/// Success-conditioned per-step means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    pub runs: usize,
    pub range_error: f64,
    pub bearing_error: f64,
    pub abs_range_error: f64,
    pub abs_bearing_error: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub config_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `1 - sum(delta)`: the worst-case guarantee on the safety probability.
    pub union_bound: f64,
    /// Mean over trials of each trial's mean applied margin.
    pub mean_margin: f64,
    pub failures: FailureCounts,
    /// Fraction of all trials ending in an infeasible QP.
    pub infeasible_share: f64,
    pub tracking_successful: ErrorStats,
    pub tracking_all: ErrorStats,
    /// Mean fraction of steps spent in each group.
    pub group_occupancy: Vec<f64>,
    pub coverage: Vec<GroupCoverage>,
    pub series: Vec<SeriesPoint>,
}

pub fn summarize(run: &EvaluationRun) -> MethodSummary {
    let n = run.outcomes.len();
    let successes = run.outcomes.iter().filter(|o| o.success).count();
    let (wilson_low, wilson_high) = wilson_interval(successes, n, Z95);
    let mut failures = FailureCounts::default();
    let (mut ok_sums, mut all_sums) = (TrackingSums::default(), TrackingSums::default());
    let groups = run.deltas.len();
    let mut occupancy = vec![0.0; groups];
    let mut margin_total = 0.0;
    for o in &run.outcomes {
        if let Some(m) = o.failure_mode {
            failures.bump(m);
        } else {
            ok_sums.merge(&o.tracking);
        }
        all_sums.merge(&o.tracking);
        margin_total += o.mean_margin;
        for (acc, f) in occupancy.iter_mut().zip(o.group_fractions()) {
            *acc += f;
        }
    }
    let per_trial = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };

    let coverage = (0..groups)
        .map(|g| {
            let delta = run.deltas[g];
            let q = run.quantiles[g];
            let maxima: Vec<f64> = run
                .outcomes
                .iter()
                .filter_map(|o| o.group_max_error.get(g).copied().flatten())
                .collect();
            let visits = maxima.len();
            let covered = maxima.iter().filter(|&&m| q.is_none_or(|q| m <= q)).count();
            let (coverage, lower_bound) = if visits == 0 {
                (None, None)
            } else {
                let m = visits as f64;
                (
                    Some(covered as f64 / m),
                    Some(1.0 - delta - 2.0 * (delta * (1.0 - delta) / m).sqrt()),
                )
            };
            GroupCoverage {
                group: g + 1,
                delta,
                quantile: q,
                visits,
                covered,
                coverage,
                lower_bound,
            }
        })
        .collect();

    let s = &run.series;
    let series = (0..s.runs.len())
        .filter(|&k| s.runs[k] > 0)
        .map(|k| {
            let c = s.runs[k] as f64;
            SeriesPoint {
                time: k as f64 * run.dt,
                runs: s.runs[k],
                range_error: s.range[k] / c,
                bearing_error: s.bearing[k] / c,
                abs_range_error: s.abs_range[k] / c,
                abs_bearing_error: s.abs_bearing[k] / c,
                margin: s.margin[k] / c,
            }
        })
        .collect();

    MethodSummary {
        method: run.method,
        config_hash: run.config_hash.clone(),
        seed: run.seed,
        dt: run.dt,
        trials: n,
        successes,
        success_rate: per_trial(successes as f64),
        wilson_low,
        wilson_high,
        union_bound: 1.0 - run.deltas.iter().sum::<f64>(),
        mean_margin: per_trial(margin_total),
        failures,
        infeasible_share: per_trial(failures.qp_infeasible as f64),
        tracking_successful: ErrorStats::from_sums(successes, &ok_sums),
        tracking_all: ErrorStats::from_sums(n, &all_sums),
        group_occupancy: occupancy.into_iter().map(per_trial).collect(),
        coverage,
        series,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // Reference values from an independent statistics package.
        let (lo, hi) = wilson_interval(95, 100, Z95);
        assert!((lo - 0.888_249_530_768_080_8).abs() < 1e-12, "{lo}");
        assert!((hi - 0.978_456_320_845_631_9).abs() < 1e-12, "{hi}");
        let (lo, hi) = wilson_interval(0, 10, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.277_532_799_862_889_26).abs() < 1e-12, "{hi}");
        assert_eq!(wilson_interval(0, 0, Z95), (0.0, 1.0));
    }

    #[test]
    fn wilson_contains_the_point_estimate() {
        for n in 1..60 {
            for s in 0..=n {
                let (lo, hi) = wilson_interval(s, n, Z95);
                let p = s as f64 / n as f64;
                assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn two_proportion_reference() {
        // p1 = 0.6, p2 = 0.4, n = 100 each: pooled 0.5, se = sqrt(0.005).
        let z = two_proportion_z(60, 100, 40, 100);
        assert!((z - 0.2 / 0.005f64.sqrt()).abs() < 1e-12);
        assert!(two_proportion_z(40, 100, 60, 100) < 0.0);
        assert!((two_proportion_z(5, 5, 0, 5) - 10f64.sqrt()).abs() < 1e-12);
    }
}
