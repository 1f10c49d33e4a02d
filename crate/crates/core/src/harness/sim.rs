//! One closed-loop trial: perception, safety filter and true kinematics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::barriers::barrier_values;
use crate::conformal::{StepRecord, TrajectoryRecord};
use crate::dynamics::{integrate_step, RelativeState};
use crate::filter::SafetyFilter;
use crate::qp::QpStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// The true follower bearing left the field of view.
    FovViolation,
    /// The true range left `[d_min, d_max]`.
    RangeViolation,
    /// The safety QP had no solution; the trial stops there.
    QpInfeasible,
    /// The state or estimate left the domain of the kinematics; the trial stops there.
    Degenerate,
}

impl FailureMode {
    pub const ALL: [FailureMode; 4] = [
        FailureMode::FovViolation,
        FailureMode::RangeViolation,
        FailureMode::QpInfeasible,
        FailureMode::Degenerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::FovViolation => "fov_violation",
            FailureMode::RangeViolation => "range_violation",
            FailureMode::QpInfeasible => "qp_infeasible",
            FailureMode::Degenerate => "degenerate",
        }
    }
}

/// Running sums of the absolute tracking errors of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingSums {
    pub steps: usize,
    pub range_abs: f64,
    pub range_sq: f64,
    pub range_max: f64,
    pub bearing_abs: f64,
    pub bearing_sq: f64,
    pub bearing_max: f64,
}

impl TrackingSums {
    fn push(&mut self, e: [f64; 2]) {
        let (r, b) = (e[0].abs(), e[1].abs());
        self.steps += 1;
        self.range_abs += r;
        self.range_sq += r * r;
        self.range_max = self.range_max.max(r);
        self.bearing_abs += b;
        self.bearing_sq += b * b;
        self.bearing_max = self.bearing_max.max(b);
    }

    pub fn merge(&mut self, other: &TrackingSums) {
        self.steps += other.steps;
        self.range_abs += other.range_abs;
        self.range_sq += other.range_sq;
        self.range_max = self.range_max.max(other.range_max);
        self.bearing_abs += other.bearing_abs;
        self.bearing_sq += other.bearing_sq;
        self.bearing_max = self.bearing_max.max(other.bearing_max);
    }

    pub fn mean_range(&self) -> f64 {
        mean(self.range_abs, self.steps)
    }

    pub fn mean_bearing(&self) -> f64 {
        mean(self.bearing_abs, self.steps)
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    /// True state stayed in the safe set at every step, every QP was
    /// feasible and the state never degenerated.
    pub success: bool,
    pub failure_mode: Option<FailureMode>,
    pub failure_time: Option<f64>,
    /// Control steps actually taken.
    pub steps: usize,
    pub tracking: TrackingSums,
    /// Mean of the finite applied margins.
    pub mean_margin: f64,
    /// Steps spent in each risk group (by estimate).
    pub group_steps: Vec<usize>,
    /// Largest weighted estimation error inside each visited group.
    pub group_max_error: Vec<Option<f64>>,
}

impl TrialOutcome {
    pub fn group_fractions(&self) -> Vec<f64> {
        self.group_steps
            .iter()
            .map(|&n| mean(n as f64, self.steps))
            .collect()
    }
}

/// Per-step `(e_L, e_alpha, margin)` of a trial.
pub type StepSeries = Vec<[f64; 3]>;

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub outcome: TrialOutcome,
    pub series: StepSeries,
    pub record: Option<TrajectoryRecord>,
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Simulate one trial from its own RNG stream.
///
/// The trial stops at its first failure: a safety violation (the leader is
/// no longer observable, so later estimates would be meaningless), an
/// infeasible QP (after applying the zero input for that step) or a
/// degenerate state.
pub fn simulate_trial(
    cfg: &ExperimentConfig,
    filter: &SafetyFilter,
    index: usize,
    seed: u64,
    keep_record: bool,
) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = RelativeState::new(
        draw(&mut rng, cfg.initial.range),
        draw(&mut rng, cfg.initial.leader_bearing),
        draw(&mut rng, cfg.initial.follower_bearing),
    );
    let groups = cfg.taxonomy.num_groups();
    let n_steps = cfg.steps();
    let mut tracking = TrackingSums::default();
    let mut group_steps = vec![0usize; groups];
    let mut group_max_error: Vec<Option<f64>> = vec![None; groups];
    let (mut margin_sum, mut margin_n) = (0.0, 0usize);
    let mut series = Vec::with_capacity(n_steps);
    let mut steps_out = keep_record.then(|| Vec::with_capacity(n_steps));
    let mut failure: Option<(FailureMode, f64)> = None;
    let mut taken = 0;

    for k in 0..n_steps {
        let t = k as f64 * cfg.dt;
        let u_leader = cfg.schedule.at(t);
        let h_true = barrier_values(&x, &cfg.safe_set).min;
        let x_hat = cfg.perception.estimate(&x, h_true, &mut rng);
        let decision = match filter.step(&x_hat, u_leader) {
            Ok(d) => d,
            Err(_) => {
                failure.get_or_insert((FailureMode::Degenerate, t));
                break;
            }
        };
        taken += 1;

        let e = cfg.gains.tracking_error(&x);
        tracking.push(e);
        series.push([e[0], e[1], decision.margin]);
        if decision.margin.is_finite() {
            margin_sum += decision.margin;
            margin_n += 1;
        }
        let g = decision.group;
        group_steps[g] += 1;
        let err = cfg.norm_weights.error(&x, &x_hat);
        group_max_error[g] = Some(group_max_error[g].map_or(err, |m: f64| m.max(err)));
        if let Some(steps) = steps_out.as_mut() {
            steps.push(StepRecord {
                time: t,
                truth: x,
                estimate: x_hat,
                u_nominal: decision.nominal,
                u_applied: decision.applied,
                u_leader,
                group: g,
                margin: decision.margin,
                status: decision.status(),
            });
        }
        if decision.status() == QpStatus::Infeasible {
            failure.get_or_insert((FailureMode::QpInfeasible, t));
            break;
        }

        x = match integrate_step(&x, decision.applied, u_leader, &cfg.kinematics, cfg.dt) {
            Ok(next) => next,
            Err(_) => {
                failure.get_or_insert((FailureMode::Degenerate, t + cfg.dt));
                break;
            }
        };
        let hv = barrier_values(&x, &cfg.safe_set);
        if !hv.is_safe() {
            let mode = if hv.argmin() < 2 {
                FailureMode::RangeViolation
            } else {
                FailureMode::FovViolation
            };
            failure = Some((mode, t + cfg.dt));
            break;
        }
    }

    let outcome = TrialOutcome {
        index,
        success: failure.is_none(),
        failure_mode: failure.map(|f| f.0),
        failure_time: failure.map(|f| f.1),
        steps: taken,
        tracking,
        mean_margin: mean(margin_sum, margin_n),
        group_steps,
        group_max_error,
    };
    TrialResult {
        outcome,
        series,
        record: steps_out.map(|steps| TrajectoryRecord { dt: cfg.dt, steps }),
    }
}
