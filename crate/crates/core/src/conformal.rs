//! Risk-aware Mondrian split conformal calibration.
//!
//! Calibration trajectories are partitioned by a risk taxonomy on the
//! estimate's barrier value `h = min_l h_l(x_hat)`. Group `B_1` (index 0 here)
//! is the highest-risk group `h < tau_1`; the last group is `h >= tau_{R-1}`.
//! Every trajectory that visits a group contributes one score to it: the
//! largest weighted estimation error seen while inside that group. Each
//! group then gets its own miscoverage level and split-conformal quantile.
//!
//! At run time the group quantiles are blended across each threshold by a
//! linear ramp of width `epsilon` on the low-risk side, which keeps the margin
//! continuous and never below the active group's quantile when quantiles
//! shrink with decreasing risk.
//!
//! Group indices are zero-based in code; files and reports label them `B1..BR`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dynamics::{ControlInput, RelativeState};
use crate::error::{Error, Result};
use crate::qp::QpStatus;

/// Strictly positive weights of the error norm over `(L, alpha, phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct NormWeights([f64; 3]);

impl NormWeights {
    pub fn new(w: [f64; 3]) -> Result<Self> {
        if w.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self(w))
        } else {
            Err(Error::Config(format!("norm weights must be positive, got {w:?}")))
        }
    }

    pub fn unit() -> Self {
        Self([1.0; 3])
    }

    /// Bearing counted twice as heavily as range and leader bearing, so one
    /// radian of follower-bearing error scores like two meters of range error.
    pub fn bearing_weighted() -> Self {
        Self([1.0, 1.0, 4.0])
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    /// `sqrt(sum_k w_k e_k^2)`.
    pub fn norm(&self, e: &[f64; 3]) -> f64 {
        (0..3).map(|k| self.0[k] * e[k] * e[k]).sum::<f64>().sqrt()
    }

    /// Weighted distance between a true state and its estimate.
    pub fn error(&self, truth: &RelativeState, estimate: &RelativeState) -> f64 {
        self.norm(&truth.error_from(estimate))
    }
}

impl Default for NormWeights {
    fn default() -> Self {
        Self::unit()
    }
}

impl TryFrom<[f64; 3]> for NormWeights {
    type Error = Error;
    fn try_from(w: [f64; 3]) -> Result<Self> {
        Self::new(w)
    }
}

impl From<NormWeights> for [f64; 3] {
    fn from(w: NormWeights) -> Self {
        w.0
    }
}

/// Ordered risk thresholds and per-group miscoverage levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskTaxonomy {
    pub thresholds: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl Default for RiskTaxonomy {
    fn default() -> Self {
        Self {
            thresholds: vec![0.1, 0.45],
            deltas: vec![0.01, 0.10, 0.45],
        }
    }
}

impl RiskTaxonomy {
    pub fn new(thresholds: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        let t = Self { thresholds, deltas };
        t.validate()?;
        Ok(t)
    }

    /// Single-group taxonomy: plain split conformal at level `delta`.
    pub fn global(delta: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![delta])
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.len() != self.thresholds.len() + 1 {
            return Err(Error::Config(format!(
                "{} thresholds need {} deltas, got {}",
                self.thresholds.len(),
                self.thresholds.len() + 1,
                self.deltas.len()
            )));
        }
        if self.thresholds.iter().any(|t| !t.is_finite())
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(format!(
                "thresholds must be finite and strictly increasing, got {:?}",
                self.thresholds
            )));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::Config(format!(
                "miscoverage levels must lie in (0, 1), got {:?}",
                self.deltas
            )));
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.deltas.len()
    }

    /// Group index of a risk value. Intervals are lower-inclusive:
    /// `tau_{r-1} <= h < tau_r`.
    pub fn assign(&self, h_min: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= h_min)
    }

    /// Union bound `1 - sum_r delta_r` on the probability of staying safe.
    pub fn union_bound(&self) -> f64 {
        1.0 - self.deltas.iter().sum::<f64>()
    }
}

/// One control step of a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub truth: RelativeState,
    pub estimate: RelativeState,
    pub u_nominal: ControlInput,
    pub u_applied: ControlInput,
    pub u_leader: ControlInput,
    /// Risk group of the estimate (zero-based).
    pub group: usize,
    pub margin: f64,
    pub status: QpStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dt: f64,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    /// Per-group worst weighted error; `None` for groups the trajectory never visits.
    pub fn group_maxima(&self, num_groups: usize, weights: &NormWeights) -> Vec<Option<f64>> {
        let mut out = vec![None; num_groups];
        for s in &self.steps {
            let e = weights.error(&s.truth, &s.estimate);
            let slot: &mut Option<f64> = &mut out[s.group];
            *slot = Some(slot.map_or(e, |m: f64| m.max(e)));
        }
        out
    }
}

/// Trajectory-level nonconformity scores for each group.
///
/// A trajectory contributes exactly one score to every group it visits and
/// nothing to the others.
pub fn trajectory_scores(
    records: &[TrajectoryRecord],
    taxonomy: &RiskTaxonomy,
    weights: &NormWeights,
) -> Vec<Vec<f64>> {
    let r = taxonomy.num_groups();
    let mut scores = vec![Vec::new(); r];
    for rec in records {
        for (g, m) in rec.group_maxima(r, weights).into_iter().enumerate() {
            if let Some(m) = m {
                scores[g].push(m);
            }
        }
    }
    scores
}

/// 1-based rank `ceil((n + 1)(1 - delta))` of the conformal quantile.
pub fn conformal_rank(n: usize, delta: f64) -> usize {
    let x = (n as f64 + 1.0) * (1.0 - delta);
    // Absorb representation error such as 20 * 0.95 = 19.000000000000004.
    (x - 1e-9 * x.max(1.0)).ceil().max(1.0) as usize
}

/// Split-conformal quantile: the `ceil((n+1)(1-delta))`-th smallest score.
///
/// Returns `f64::INFINITY` when that rank exceeds `n`, i.e. the requested
/// coverage is unattainable with this many scores.
pub fn conformal_quantile(scores: &[f64], delta: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let k = conformal_rank(scores.len(), delta);
    if k > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Calibrated per-group radii and everything needed to use them online.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub thresholds: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Per-group radius `q_r` in weighted-norm units; `inf` marks insufficient data.
    pub quantiles: Vec<f64>,
    /// Width of the transition buffer above each threshold.
    pub epsilon: f64,
    pub norm_weights: NormWeights,
    /// Number of calibration trajectories visiting each group.
    pub counts: Vec<usize>,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl QuantileTable {
    /// Build and validate a table from precomputed quantiles.
    pub fn new(
        taxonomy: &RiskTaxonomy,
        quantiles: Vec<f64>,
        epsilon: f64,
        norm_weights: NormWeights,
        counts: Vec<usize>,
    ) -> Result<Self> {
        let mut table = Self {
            thresholds: taxonomy.thresholds.clone(),
            deltas: taxonomy.deltas.clone(),
            quantiles,
            epsilon,
            norm_weights,
            counts,
            config_hash: String::new(),
            warnings: Vec::new(),
        };
        table.validate()?;
        table.warnings = table.diagnose();
        Ok(table)
    }

    pub fn taxonomy(&self) -> RiskTaxonomy {
        RiskTaxonomy {
            thresholds: self.thresholds.clone(),
            deltas: self.deltas.clone(),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.quantiles.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.taxonomy().validate()?;
        let r = self.deltas.len();
        if self.quantiles.len() != r || self.counts.len() != r {
            return Err(Error::Config(format!(
                "table has {r} groups but {} quantiles and {} counts",
                self.quantiles.len(),
                self.counts.len()
            )));
        }
        if self.quantiles.iter().any(|q| q.is_nan() || *q < 0.0) {
            return Err(Error::Config(format!(
                "quantiles must be non-negative, got {:?}",
                self.quantiles
            )));
        }
        if r > 1 && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "transition buffer width must be positive, got {}",
                self.epsilon
            )));
        }
        if let Some(gap) = self
            .thresholds
            .windows(2)
            .map(|w| w[1] - w[0])
            .find(|gap| self.epsilon > *gap)
        {
            return Err(Error::Config(format!(
                "transition buffers overlap: epsilon {} exceeds threshold gap {gap}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Non-fatal calibration findings.
    fn diagnose(&self) -> Vec<String> {
        let mut w = Vec::new();
        for (g, q) in self.quantiles.iter().enumerate() {
            if q.is_infinite() {
                w.push(format!(
                    "B{}: {} trajectories cannot support coverage {:.2}; radius is unbounded",
                    g + 1,
                    self.counts[g],
                    1.0 - self.deltas[g]
                ));
            }
        }
        for g in 1..self.quantiles.len() {
            if self.quantiles[g] > self.quantiles[g - 1] {
                w.push(format!(
                    "quantiles not non-increasing in risk: B{} = {} < B{} = {}",
                    g,
                    self.quantiles[g - 1],
                    g + 1,
                    self.quantiles[g]
                ));
            }
        }
        w
    }

    pub fn is_monotone(&self) -> bool {
        self.quantiles.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn all_finite(&self) -> bool {
        self.quantiles.iter().all(|q| q.is_finite())
    }

    pub fn assign(&self, h_min: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= h_min)
    }

    /// Continuous margin: the active group's radius, linearly ramped to the
    /// next lower-risk group's radius across `[tau_r, tau_r + epsilon]`.
    pub fn smooth_margin(&self, h_min: f64) -> f64 {
        for (r, &tau) in self.thresholds.iter().enumerate() {
            if h_min >= tau && h_min <= tau + self.epsilon {
                let (hi, lo) = (self.quantiles[r], self.quantiles[r + 1]);
                if !(hi.is_finite() && lo.is_finite()) {
                    return f64::INFINITY;
                }
                return hi + (lo - hi) * (h_min - tau) / self.epsilon;
            }
        }
        self.quantiles[self.assign(h_min)]
    }

    /// Lipschitz constant of [`Self::smooth_margin`] in `h`.
    pub fn margin_slope_bound(&self) -> f64 {
        self.quantiles
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / self.epsilon)
            .fold(0.0, f64::max)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("<quantile table>", e))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: Self = toml::from_str(text).map_err(|e| Error::parse("<quantile table>", e))?;
        t.validate()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }
}

/// Risk-aware calibration: one conformal quantile per group at its own level.
///
/// Fails if any group has no visiting trajectory; a group with too few
/// trajectories gets an unbounded radius and a warning instead.
pub fn calibrate(
    records: &[TrajectoryRecord],
    taxonomy: &RiskTaxonomy,
    epsilon: f64,
    weights: &NormWeights,
) -> Result<QuantileTable> {
    taxonomy.validate()?;
    let scores = trajectory_scores(records, taxonomy, weights);
    let mut quantiles = Vec::with_capacity(scores.len());
    for (g, s) in scores.iter().enumerate() {
        let q = conformal_quantile(s, taxonomy.deltas[g]).map_err(|e| match e {
            Error::EmptyScores => Error::EmptyGroup { group: g + 1 },
            other => other,
        })?;
        quantiles.push(q);
    }
    let counts = scores.iter().map(Vec::len).collect();
    QuantileTable::new(taxonomy, quantiles, epsilon, *weights, counts)
}
