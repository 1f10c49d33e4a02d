//! Brute-force reference checks for the QP solver and the conformal quantile.
//!
//! Both run on random instances from a seeded generator and report
//! disagreements instead of asserting, so the CLI and the test suite share
//! them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

use crate::conformal::conformal_quantile;
use crate::dynamics::ControlInput;
use crate::qp::{phase_one, solve, HalfPlane, InputBox, QpProblem, FEAS_TOL};

/// Grid points per axis.
pub const GRID_POINTS: usize = 400;
/// Grid spacing; the box is sized so the grid has exactly this resolution.
pub const GRID_STEP: f64 = 1e-3;

fn grid_half_width() -> f64 {
    (GRID_POINTS - 1) as f64 * GRID_STEP / 2.0
}

fn grid_value(i: usize) -> f64 {
    -grid_half_width() + i as f64 * GRID_STEP
}

/// Random instance on the oracle box, mixing feasible and infeasible rows.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let w = grid_half_width();
    let m = rng.random_range(1..=4);
    let rows = (0..m)
        .map(|_| {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let s: f64 = rng.random_range(0.3..3.0);
            let b = s * rng.random_range(-1.2 * w..0.9 * w);
            HalfPlane::new([s * th.cos(), s * th.sin()], b)
        })
        .collect();
    QpProblem {
        target: ControlInput::new(rng.random_range(-2.0 * w..2.0 * w), rng.random_range(-2.0 * w..2.0 * w)),
        rows,
        bounds: InputBox::symmetric(w, w),
    }
}

/// Exact minimiser of `(x - t)^2` over the feasible interval of the free
/// coordinate when the other is fixed; `None` when that slice is empty.
fn slice_min(p: &QpProblem, fixed_axis: usize, fixed: f64) -> Option<(f64, f64)> {
    let free = 1 - fixed_axis;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for r in p.all_rows() {
        let c = r.a[free];
        let rhs = r.b - r.a[fixed_axis] * fixed;
        if c.abs() < 1e-300 {
            if rhs > 0.0 {
                return None;
            }
        } else if c > 0.0 {
            lo = lo.max(rhs / c);
        } else {
            hi = hi.min(rhs / c);
        }
    }
    if lo > hi {
        return None;
    }
    let t = p.target.to_array();
    let x = t[free].clamp(lo, hi);
    Some((x, (x - t[free]).powi(2) + (fixed - t[fixed_axis]).powi(2)))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QpOracleReport {
    pub instances: usize,
    pub feasible: usize,
    pub infeasible: usize,
    /// Instances where the solver verdict differs from the phase-1 LP.
    pub verdict_mismatches: usize,
    /// Largest coordinate distance to the sweep minimisers.
    pub max_coordinate_error: f64,
    /// Largest amount by which the solver objective exceeds the grid minimum.
    pub max_objective_excess: f64,
    pub max_kkt_residual: f64,
    pub max_constraint_violation: f64,
    pub seconds: f64,
}

impl QpOracleReport {
    pub fn passes(&self) -> bool {
        self.verdict_mismatches == 0
            && self.max_coordinate_error <= GRID_STEP
            && self.max_objective_excess <= 1e-12
            && self.max_kkt_residual < 1e-8
            && self.max_constraint_violation <= 1e-8
    }
}

/// Compare the active-set solver with a full grid search and with exact
/// per-column and per-row sweeps on `GRID_POINTS` lines in each axis.
///
/// The objective restricted to a column is convex in the column position, so
/// the best column lies within one grid step of the optimum's first
/// coordinate; rows bound the second coordinate the same way.
pub fn run_qp_oracle(instances: usize, seed: u64) -> QpOracleReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = QpOracleReport {
        instances,
        ..Default::default()
    };
    for _ in 0..instances {
        let p = random_qp(&mut rng);
        let sol = solve(&p);
        let lp_feasible = phase_one(&p.all_rows()).max_slack >= -FEAS_TOL;
        if sol.is_optimal() != lp_feasible {
            rep.verdict_mismatches += 1;
        }
        if !sol.is_optimal() {
            rep.infeasible += 1;
            continue;
        }
        rep.feasible += 1;
        let u = sol.u.to_array();
        let obj = |v: [f64; 2]| p.objective(v);
        rep.max_kkt_residual = rep.max_kkt_residual.max(sol.kkt_residual);
        rep.max_constraint_violation = rep.max_constraint_violation.max(-p.min_slack(u));

        let rows = p.all_rows();
        let mut grid_min = f64::INFINITY;
        for i in 0..GRID_POINTS {
            for j in 0..GRID_POINTS {
                let v = [grid_value(i), grid_value(j)];
                if rows.iter().all(|r| r.slack(v) >= 0.0) {
                    grid_min = grid_min.min(obj(v));
                }
            }
        }
        if grid_min.is_finite() {
            rep.max_objective_excess = rep.max_objective_excess.max(obj(u) - grid_min);
        }

        for axis in 0..2 {
            let best = (0..GRID_POINTS)
                .filter_map(|i| slice_min(&p, axis, grid_value(i)).map(|(_, f)| (grid_value(i), f)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((c, _)) = best {
                rep.max_coordinate_error = rep.max_coordinate_error.max((u[axis] - c).abs());
            }
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    rep
}

/// Reference split-conformal quantile by counting: the smallest score `s`
/// with `#{x <= s} >= (n + 1)(1 - delta)`, or infinity if none exists.
pub fn counting_quantile(scores: &[f64], delta: f64) -> f64 {
    let n = scores.len() as f64;
    let need = (n + 1.0) * (1.0 - delta);
    let need = need - 1e-9 * need.max(1.0);
    let mut best = f64::INFINITY;
    for &s in scores {
        let count = scores.iter().filter(|&&x| x <= s).count() as f64;
        if count >= need && s < best {
            best = s;
        }
    }
    best
}

/// Reference by sorting: the `ceil((n + 1)(1 - delta))`-th smallest score,
/// or infinity when that rank exceeds `n`.
pub fn sort_index_quantile(scores: &[f64], delta: f64) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let need = (sorted.len() as f64 + 1.0) * (1.0 - delta);
    let k = (need - 1e-9 * need.max(1.0)).ceil().max(1.0) as usize;
    sorted.get(k - 1).copied().unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QuantileOracleReport {
    pub cases: usize,
    /// Cases where the requested rank exceeds the sample size.
    pub sentinel_cases: usize,
    pub mismatches: usize,
}

impl QuantileOracleReport {
    pub fn passes(&self) -> bool {
        self.mismatches == 0
    }
}

/// Compare [`conformal_quantile`] with both references on random
/// multisets with repeated values and a mix of round and arbitrary levels.
pub fn run_quantile_oracle(cases: usize, seed: u64) -> QuantileOracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = QuantileOracleReport {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let n = rng.random_range(1..=150);
        let levels = rng.random_range(1..=n.max(2));
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 * 0.125 + rng.random_range(0..3) as f64)
            .collect();
        let delta = if rng.random_bool(0.5) {
            rng.random_range(1..100) as f64 / 100.0
        } else {
            rng.random_range(0.001..0.999)
        };
        let reference = sort_index_quantile(&scores, delta);
        if reference.is_infinite() {
            rep.sentinel_cases += 1;
        }
        match conformal_quantile(&scores, delta) {
            Ok(q) if q == reference && q == counting_quantile(&scores, delta) => {}
            _ => rep.mismatches += 1,
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_the_requested_resolution() {
        assert!((grid_value(1) - grid_value(0) - GRID_STEP).abs() < 1e-15);
        assert!((grid_value(GRID_POINTS - 1) - grid_half_width()).abs() < 1e-15);
    }

    #[test]
    fn counting_reference_small_cases() {
        assert_eq!(counting_quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(counting_quantile(&[1.0, 2.0], 0.01), f64::INFINITY);
        assert_eq!(counting_quantile(&[2.0, 2.0, 2.0, 1.0], 0.3), 2.0);
        let s: Vec<f64> = (1..=19).map(f64::from).collect();
        assert_eq!(sort_index_quantile(&s, 0.05), 19.0);
        assert_eq!(sort_index_quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
    }

    #[test]
    fn small_oracle_batches_pass() {
        let q = run_qp_oracle(20, 3);
        assert!(q.passes(), "{q:?}");
        let c = run_quantile_oracle(500, 4);
        assert!(c.passes(), "{c:?}");
        assert!(c.sentinel_cases > 0);
    }
}
