//! Exact solver for the two-input safety QP
//!
//! ```text
//! min  1/2 |u - t|^2   s.t.  a_i . u >= b_i,  u in box
//! ```
//!
//! by enumerating every active set of at most two rows. With two variables
//! the optimum is always characterised by such a set, so the enumeration is
//! exact and needs no iteration. Emptiness of the feasible set is confirmed
//! by a phase-1 LP solved by vertex enumeration.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};

/// Absolute tolerance on `a . u - b` for primal feasibility.
pub const FEAS_TOL: f64 = 1e-9;
/// Tolerance on multiplier signs.
const DUAL_TOL: f64 = 1e-9;
/// Relative determinant below which a pair of rows counts as parallel.
const PARALLEL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

/// Half-plane `a . u >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub a: [f64; 2],
    pub b: f64,
}

impl HalfPlane {
    pub fn new(a: [f64; 2], b: f64) -> Self {
        Self { a, b }
    }

    /// `a . u - b`; non-negative when satisfied.
    pub fn slack(&self, u: [f64; 2]) -> f64 {
        self.a[0] * u[0] + self.a[1] * u[1] - self.b
    }
}

/// Box `v_min <= v <= v_max`, `w_min <= omega <= w_max` on the follower input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputBox {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for InputBox {
    /// Forward-only follower.
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 1.0,
            w_min: -1.5,
            w_max: 1.5,
        }
    }
}

impl InputBox {
    pub fn symmetric(v: f64, w: f64) -> Self {
        Self {
            v_min: -v,
            v_max: v,
            w_min: -w,
            w_max: w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.v_min, self.v_max, self.w_min, self.w_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.v_min > self.v_max || self.w_min > self.w_max {
            return Err(Error::Config(format!("input box is empty or unbounded: {self:?}")));
        }
        Ok(())
    }

    pub fn rows(&self) -> [HalfPlane; 4] {
        [
            HalfPlane::new([1.0, 0.0], self.v_min),
            HalfPlane::new([-1.0, 0.0], -self.v_max),
            HalfPlane::new([0.0, 1.0], self.w_min),
            HalfPlane::new([0.0, -1.0], -self.w_max),
        ]
    }

    pub fn contains(&self, u: [f64; 2]) -> bool {
        self.rows().iter().all(|r| r.slack(u) >= -FEAS_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Objective center, normally the nominal input.
    pub target: ControlInput,
    /// General rows; the box rows are appended after these.
    pub rows: Vec<HalfPlane>,
    pub bounds: InputBox,
}

impl QpProblem {
    /// General rows followed by the four box rows.
    pub fn all_rows(&self) -> Vec<HalfPlane> {
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&self.bounds.rows());
        rows
    }

    pub fn objective(&self, u: [f64; 2]) -> f64 {
        let t = self.target.to_array();
        0.5 * ((u[0] - t[0]).powi(2) + (u[1] - t[1]).powi(2))
    }

    /// Smallest slack over all rows including the box.
    pub fn min_slack(&self, u: [f64; 2]) -> f64 {
        self.all_rows()
            .iter()
            .map(|r| r.slack(u))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub status: QpStatus,
    /// Minimiser when optimal; the target otherwise.
    pub u: ControlInput,
    /// Indices into [`QpProblem::all_rows`] held with equality.
    pub active_set: Vec<usize>,
    /// Multipliers matching `active_set`.
    pub multipliers: Vec<f64>,
    /// Stationarity, primal and complementarity residual; zero when infeasible.
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn infeasible(target: ControlInput) -> Self {
        Self {
            status: QpStatus::Infeasible,
            u: target,
            active_set: Vec::new(),
            multipliers: Vec::new(),
            kkt_residual: 0.0,
        }
    }
}

/// Rows after resolving infinite right-hand sides. `None` means some row can
/// never hold.
fn effective_rows(p: &QpProblem) -> Option<Vec<(usize, HalfPlane)>> {
    let mut out = Vec::new();
    for (i, r) in p.all_rows().into_iter().enumerate() {
        if r.b.is_nan() || r.a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if r.b == f64::NEG_INFINITY {
            continue;
        }
        if r.b == f64::INFINITY {
            return None;
        }
        if r.a[0] == 0.0 && r.a[1] == 0.0 {
            if r.b > FEAS_TOL {
                return None;
            }
            continue;
        }
        out.push((i, r));
    }
    Some(out)
}

fn solve2(m: [[f64; 2]; 2], rhs: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = (m[0][0].hypot(m[0][1])) * (m[1][0].hypot(m[1][1]));
    if det.abs() <= PARALLEL_TOL * scale {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ])
}

struct Candidate {
    u: [f64; 2],
    active: Vec<usize>,
    lambda: Vec<f64>,
}

/// Every KKT point generated by an active set of size at most two.
fn kkt_candidates(t: [f64; 2], rows: &[(usize, HalfPlane)], tol: f64) -> Vec<Candidate> {
    let feasible = |u: [f64; 2]| rows.iter().all(|(_, r)| r.slack(u) >= -tol);
    let mut out = Vec::new();
    if feasible(t) {
        out.push(Candidate {
            u: t,
            active: Vec::new(),
            lambda: Vec::new(),
        });
    }
    for (i, (_, r)) in rows.iter().enumerate() {
        let nn = r.a[0] * r.a[0] + r.a[1] * r.a[1];
        let lambda = -r.slack(t) / nn;
        if lambda < -DUAL_TOL {
            continue;
        }
        let u = [t[0] + lambda * r.a[0], t[1] + lambda * r.a[1]];
        if feasible(u) {
            out.push(Candidate {
                u,
                active: vec![i],
                lambda: vec![lambda],
            });
        }
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (ri, rj) = (rows[i].1, rows[j].1);
            let Some(u) = solve2([ri.a, rj.a], [ri.b, rj.b]) else {
                continue;
            };
            // (u - t) = li * ai + lj * aj
            let at = [[ri.a[0], rj.a[0]], [ri.a[1], rj.a[1]]];
            let Some(l) = solve2(at, [u[0] - t[0], u[1] - t[1]]) else {
                continue;
            };
            if l[0] < -DUAL_TOL || l[1] < -DUAL_TOL || !feasible(u) {
                continue;
            }
            out.push(Candidate {
                u,
                active: vec![i, j],
                lambda: l.to_vec(),
            });
        }
    }
    out
}

/// KKT residual of `u` with multipliers on the given row positions.
fn kkt_residual(t: [f64; 2], rows: &[(usize, HalfPlane)], u: [f64; 2], active: &[usize], lambda: &[f64]) -> f64 {
    let mut stat = [u[0] - t[0], u[1] - t[1]];
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    for (&k, &l) in active.iter().zip(lambda) {
        let r = rows[k].1;
        stat[0] -= l * r.a[0];
        stat[1] -= l * r.a[1];
        comp = comp.max((l * r.slack(u)).abs());
        dual = dual.max(-l);
    }
    let primal = rows
        .iter()
        .map(|(_, r)| -r.slack(u))
        .fold(0.0, f64::max);
    stat[0].hypot(stat[1]) + primal + comp + dual
}

/// Solve the QP exactly. Problems whose rows have NaN or `+inf` right-hand
/// sides are infeasible; rows with `-inf` right-hand sides are ignored.
pub fn solve(p: &QpProblem) -> QpSolution {
    let Some(rows) = effective_rows(p) else {
        return QpSolution::infeasible(p.target);
    };
    let t = p.target.to_array();
    let mut cands = kkt_candidates(t, &rows, FEAS_TOL);
    if cands.is_empty() {
        let lp = phase_one(&rows.iter().map(|(_, r)| *r).collect::<Vec<_>>());
        if lp.max_slack < -FEAS_TOL {
            return QpSolution::infeasible(p.target);
        }
        // Feasible within tolerance but every candidate was rejected by
        // rounding; retry with a looser check before giving up on KKT.
        cands = kkt_candidates(t, &rows, 1e3 * FEAS_TOL);
        if cands.is_empty() {
            cands.push(Candidate {
                u: lp.u,
                active: Vec::new(),
                lambda: Vec::new(),
            });
        }
    }
    let obj = |u: [f64; 2]| (u[0] - t[0]).powi(2) + (u[1] - t[1]).powi(2);
    let best = cands
        .into_iter()
        .min_by(|a, b| obj(a.u).total_cmp(&obj(b.u)))
        .expect("candidate list is non-empty");
    let kkt = kkt_residual(t, &rows, best.u, &best.active, &best.lambda);
    QpSolution {
        status: QpStatus::Optimal,
        u: ControlInput::from_array(best.u),
        active_set: best.active.iter().map(|&k| rows[k].0).collect(),
        multipliers: best.lambda,
        kkt_residual: kkt,
    }
}

/// Result of the phase-1 feasibility LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOne {
    /// `max_u min_i (a_i . u - b_i) / |a_i|`; the feasible set is non-empty iff this is `>= 0`.
    pub max_slack: f64,
    pub u: [f64; 2],
}

/// Phase-1 LP `max s` s.t. `a_i . u - b_i >= s |a_i|`, by enumerating the
/// vertices of the lifted polytope in `(u, s)`. Needs rows that bound `u`,
/// such as the box rows.
pub fn phase_one(rows: &[HalfPlane]) -> PhaseOne {
    let norm: Vec<f64> = rows.iter().map(|r| r.a[0].hypot(r.a[1])).collect();
    let lifted: Vec<[f64; 4]> = rows
        .iter()
        .zip(&norm)
        .map(|(r, n)| [r.a[0] / n, r.a[1] / n, -1.0, r.b / n])
        .collect();
    let mut best = PhaseOne {
        max_slack: f64::NEG_INFINITY,
        u: [0.0, 0.0],
    };
    let n = lifted.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = [lifted[i], lifted[j], lifted[k]];
                let Some(x) = solve3(m) else { continue };
                let ok = lifted
                    .iter()
                    .all(|c| c[0] * x[0] + c[1] * x[1] + c[2] * x[2] - c[3] >= -1e-12);
                if ok && x[2] > best.max_slack {
                    best = PhaseOne {
                        max_slack: x[2],
                        u: [x[0], x[1]],
                    };
                }
            }
        }
    }
    best
}

/// Solve the 3x3 system with rows `[m0 m1 m2 | rhs]` by Cramer's rule.
fn solve3(m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    let det3 = |c: [[f64; 3]; 3]| {
        c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1])
            - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
            + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0])
    };
    let a: [[f64; 3]; 3] = std::array::from_fn(|r| [m[r][0], m[r][1], m[r][2]]);
    let d = det3(a);
    if d.abs() < 1e-12 {
        return None;
    }
    Some(std::array::from_fn(|col| {
        let mut c = a;
        for r in 0..3 {
            c[r][col] = m[r][3];
        }
        det3(c) / d
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(t: [f64; 2], rows: Vec<HalfPlane>) -> QpProblem {
        QpProblem {
            target: ControlInput::from_array(t),
            rows,
            bounds: InputBox::symmetric(1.0, 2.0),
        }
    }

    #[test]
    fn feasible_target_is_returned() {
        let p = problem([0.2, -0.3], vec![HalfPlane::new([1.0, 1.0], -1.0)]);
        let s = solve(&p);
        assert!(s.is_optimal());
        assert_eq!(s.u.to_array(), [0.2, -0.3]);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn single_violated_row_is_a_projection() {
        let a = [0.6, -0.8];
        let b = 0.5;
        let t = [0.1, 0.2];
        let s = solve(&problem(t, vec![HalfPlane::new(a, b)]));
        let lambda = (b - (a[0] * t[0] + a[1] * t[1])) / (a[0] * a[0] + a[1] * a[1]);
        let want = [t[0] + lambda * a[0], t[1] + lambda * a[1]];
        assert!((s.u.linear - want[0]).abs() < 1e-12 && (s.u.angular - want[1]).abs() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn projection_matches_fine_grid() {
        let p = problem([0.1, 0.2], vec![HalfPlane::new([0.6, -0.8], 0.5)]);
        let s = solve(&p);
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        let n = 2001;
        for i in 0..n {
            for j in 0..n {
                let u = [-1.0 + 2.0 * i as f64 / (n - 1) as f64, -2.0 + 4.0 * j as f64 / (n - 1) as f64];
                if p.min_slack(u) >= 0.0 && p.objective(u) < best.0 {
                    best = (p.objective(u), u);
                }
            }
        }
        assert!((s.u.linear - best.1[0]).abs() < 1e-3);
        assert!((s.u.angular - best.1[1]).abs() < 2e-3);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let p = problem(
            [0.0, 0.0],
            vec![HalfPlane::new([1.0, 0.0], 1.0), HalfPlane::new([-1.0, 0.0], 0.0)],
        );
        let s = solve(&p);
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!(phase_one(&p.all_rows()).max_slack < 0.0);
    }

    #[test]
    fn row_outside_the_box_is_infeasible() {
        let s = solve(&problem([0.0, 0.0], vec![HalfPlane::new([1.0, 0.0], 1.5)]));
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn infinite_right_hand_sides() {
        let s = solve(&problem([0.0, 0.0], vec![HalfPlane::new([0.0, 1.0], f64::INFINITY)]));
        assert_eq!(s.status, QpStatus::Infeasible);
        let s = solve(&problem([0.3, 0.0], vec![HalfPlane::new([0.0, 1.0], f64::NEG_INFINITY)]));
        assert!(s.is_optimal());
        assert_eq!(s.u.to_array(), [0.3, 0.0]);
    }

    #[test]
    fn target_outside_box_is_clipped() {
        let s = solve(&problem([3.0, -5.0], vec![]));
        assert_eq!(s.u.to_array(), [1.0, -2.0]);
        assert_eq!(s.active_set.len(), 2);
    }

    #[test]
    fn parallel_duplicate_rows() {
        let r = HalfPlane::new([1.0, 1.0], 0.5);
        let s = solve(&problem([0.0, 0.0], vec![r, r]));
        assert!(s.is_optimal());
        assert!((s.u.linear - 0.25).abs() < 1e-12 && (s.u.angular - 0.25).abs() < 1e-12);
    }

    #[test]
    fn phase_one_of_box_is_half_width() {
        let r = phase_one(&InputBox::symmetric(1.0, 2.0).rows());
        assert!((r.max_slack - 1.0).abs() < 1e-12);
        assert!(r.u[0].abs() < 1e-12);
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
        let m = rng.random_range(1..=4);
        let rows = (0..m)
            .map(|_| {
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let s: f64 = rng.random_range(0.2..2.0);
                HalfPlane::new([s * th.cos(), s * th.sin()], rng.random_range(-1.5..1.0))
            })
            .collect();
        problem([rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0)], rows)
    }

    #[test]
    fn minimal_invasiveness_against_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 40 {
            let p = random_problem(&mut rng);
            let s = solve(&p);
            if !s.is_optimal() {
                continue;
            }
            checked += 1;
            let best = p.objective(s.u.to_array());
            // Half the samples come from a shrinking neighbourhood of the
            // solution so thin feasible sets still get 10^4 points.
            let c = s.u.to_array();
            let mut n = 0;
            for attempt in 0..2_000_000u32 {
                if n == 10_000 {
                    break;
                }
                let u = if attempt % 2 == 0 {
                    [rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0)]
                } else {
                    let r = 10f64.powi(-rng.random_range(1..7));
                    [c[0] + r * rng.random_range(-1.0..1.0), c[1] + r * rng.random_range(-1.0..1.0)]
                };
                if p.min_slack(u) < 0.0 {
                    continue;
                }
                n += 1;
                assert!(best <= p.objective(u) + 1e-12);
            }
            assert!(n > 100, "only {n} feasible samples");
        }
    }

    #[test]
    fn verdict_matches_phase_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (mut feas, mut infeas) = (0, 0);
        for _ in 0..2000 {
            let p = random_problem(&mut rng);
            let s = solve(&p);
            let lp = phase_one(&p.all_rows());
            assert_eq!(s.is_optimal(), lp.max_slack >= -FEAS_TOL, "{p:?}");
            if s.is_optimal() {
                feas += 1;
                assert!(s.kkt_residual < 1e-8);
                assert!(p.min_slack(s.u.to_array()) >= -1e-8);
            } else {
                infeas += 1;
            }
        }
        assert!(feas > 200 && infeas > 200, "{feas} feasible, {infeas} infeasible");
    }

    proptest! {
        #[test]
        fn kkt_certificate(
            t0 in -2.0f64..2.0, t1 in -3.0f64..3.0,
            th in 0.0f64..6.28, b in -1.0f64..0.8,
        ) {
            let p = problem([t0, t1], vec![HalfPlane::new([th.cos(), th.sin()], b)]);
            let s = solve(&p);
            prop_assert!(s.is_optimal());
            prop_assert!(s.kkt_residual < 1e-8);
            prop_assert!(s.multipliers.iter().all(|l| *l >= 0.0));
        }

        #[test]
        fn idempotent_on_solution(t0 in -2.0f64..2.0, t1 in -3.0f64..3.0, b in -1.0f64..0.9) {
            let mut p = problem([t0, t1], vec![HalfPlane::new([0.3, -0.9], b)]);
            let s = solve(&p);
            prop_assume!(s.is_optimal());
            p.target = s.u;
            let again = solve(&p);
            prop_assert!((again.u.linear - s.u.linear).abs() < 1e-12);
            prop_assert!((again.u.angular - s.u.angular).abs() < 1e-12);
        }
    }
}
