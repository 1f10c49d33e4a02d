//! Field-of-view safe set and the quantities the safety QP needs from it.
//!
//! The safe set keeps the leader observable: range within `[d_min, d_max]`
//! and follower bearing within `+-psi_max`. It is encoded by four barriers
//!
//! ```text
//! h1 = L - d_min    h2 = d_max - L    h3 = phi + psi_max    h4 = psi_max - phi
//! ```
//!
//! and the scalar risk indicator is their minimum.

use serde::{Deserialize, Serialize};

use crate::conformal::NormWeights;
use crate::dynamics::{drift, input_map, ControlInput, KinematicsParams, RelativeState};
use crate::error::{Error, Result};

pub const NUM_BARRIERS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SafeSetParams {
    pub range_min: f64,
    pub range_max: f64,
    /// Half field of view `psi_max`, radians.
    pub half_fov: f64,
    /// Class-K gains, one per barrier.
    pub gains: [f64; NUM_BARRIERS],
}

impl Default for SafeSetParams {
    fn default() -> Self {
        Self {
            range_min: 0.3,
            range_max: 3.0,
            half_fov: 0.76,
            gains: [3.0; NUM_BARRIERS],
        }
    }
}

impl SafeSetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_min > 0.0 && self.range_min < self.range_max && self.range_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < range_min < range_max, got {} and {}",
                self.range_min, self.range_max
            )));
        }
        if !(self.half_fov > 0.0 && self.half_fov.is_finite()) {
            return Err(Error::Config(format!(
                "half_fov must be positive, got {}",
                self.half_fov
            )));
        }
        if self.gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::Config(format!(
                "barrier gains must be positive, got {:?}",
                self.gains
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierValues {
    pub h: [f64; NUM_BARRIERS],
    /// `min_l h_l`; smaller means closer to a constraint.
    pub min: f64,
}

impl BarrierValues {
    /// Index of the smallest barrier.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for i in 1..NUM_BARRIERS {
            if self.h[i] < self.h[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_safe(&self) -> bool {
        self.min >= 0.0
    }
}

pub fn barrier_values(x: &RelativeState, p: &SafeSetParams) -> BarrierValues {
    let h = [
        x.range - p.range_min,
        p.range_max - x.range,
        x.follower_bearing + p.half_fov,
        p.half_fov - x.follower_bearing,
    ];
    let min = h.iter().copied().fold(f64::INFINITY, f64::min);
    BarrierValues { h, min }
}

/// Lipschitz constants of each barrier under the weighted norm.
///
/// Each barrier is a unit-slope linear function of one coordinate `k`, so its
/// constant is `1 / sqrt(w_k)`.
pub fn lipschitz_constants(weights: &NormWeights) -> [f64; NUM_BARRIERS] {
    let w = weights.as_array();
    let range = 1.0 / w[0].sqrt();
    let bearing = 1.0 / w[2].sqrt();
    [range, range, bearing, bearing]
}

/// `h_l(x_hat) - L_l * margin` for each barrier.
pub fn tightened_barriers(
    x_hat: &RelativeState,
    margin: f64,
    p: &SafeSetParams,
    lipschitz: &[f64; NUM_BARRIERS],
) -> [f64; NUM_BARRIERS] {
    let h = barrier_values(x_hat, p).h;
    std::array::from_fn(|i| h[i] - lipschitz[i] * margin)
}

/// Lie derivatives of one barrier along the relative kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieRow {
    /// `L_f h`: rate contributed by the leader's motion.
    pub drift: f64,
    /// `L_g h`: row multiplying the follower input `(v, omega)`.
    pub input: [f64; 2],
}

impl LieRow {
    /// `L_f h + L_g h u`.
    pub fn rate(&self, u: ControlInput) -> f64 {
        self.drift + self.input[0] * u.linear + self.input[1] * u.angular
    }
}

/// Constant gradients of `h1..h4` with respect to `(L, alpha, phi)`.
const GRADIENTS: [[f64; 3]; NUM_BARRIERS] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

/// Lie derivatives of all four barriers at the estimate.
///
/// The conformal margin is held fixed over a control step, so the tightened
/// barriers share these derivatives.
pub fn lie_derivatives(
    x_hat: &RelativeState,
    u_leader: ControlInput,
    kin: &KinematicsParams,
) -> Result<[LieRow; NUM_BARRIERS]> {
    if !(x_hat.range > kin.range_floor) || !x_hat.is_finite() {
        return Err(Error::DegenerateState(format!(
            "estimate range {} at or below floor {}",
            x_hat.range, kin.range_floor
        )));
    }
    let f = drift(x_hat, u_leader);
    let g = input_map(x_hat, kin);
    Ok(std::array::from_fn(|l| {
        let grad = GRADIENTS[l];
        let dot = |col: &dyn Fn(usize) -> f64| (0..3).map(|i| grad[i] * col(i)).sum::<f64>();
        LieRow {
            drift: dot(&|i| f[i]),
            input: [dot(&|i| g[i][0]), dot(&|i| g[i][1])],
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{state_derivative, BearingFrame};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn range_floor_is_boundary() {
        let v = barrier_values(&RelativeState::new(0.3, 0.0, 0.0), &SafeSetParams::default());
        assert_eq!(v.h[0], 0.0);
    }

    #[test]
    fn centered_formation_values() {
        let v = barrier_values(&RelativeState::new(1.65, 0.0, 0.0), &SafeSetParams::default());
        let want = [1.35, 1.35, 0.76, 0.76];
        for i in 0..4 {
            assert!(close(v.h[i], want[i]));
        }
        assert!(close(v.min, 0.76));
    }

    #[test]
    fn near_edge_values() {
        let v = barrier_values(&RelativeState::new(2.9, 0.0, 0.7), &SafeSetParams::default());
        let want = [2.6, 0.1, 1.46, 0.06];
        for i in 0..4 {
            assert!(close(v.h[i], want[i]));
        }
        assert!(close(v.min, 0.06));
        assert_eq!(v.argmin(), 3);
    }

    #[test]
    fn unit_weights_give_unit_constants() {
        assert_eq!(lipschitz_constants(&NormWeights::unit()), [1.0; 4]);
    }

    #[test]
    fn weighted_constants() {
        let w = NormWeights::new([4.0, 1.0, 1.0]).unwrap();
        assert_eq!(lipschitz_constants(&w), [0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn lipschitz_bound_holds_on_random_pairs() {
        let p = SafeSetParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for weights in [[1.0, 1.0, 1.0], [4.0, 1.0, 1.0], [0.25, 3.0, 9.0]] {
            let w = NormWeights::new(weights).unwrap();
            let lh = lipschitz_constants(&w);
            let mut worst = [0.0f64; 4];
            for _ in 0..100_000 {
                let mut draw = || {
                    RelativeState::new(
                        rng.random_range(0.1..3.5),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                };
                let (x, y) = (draw(), draw());
                let (hx, hy) = (barrier_values(&x, &p).h, barrier_values(&y, &p).h);
                let d = w.norm(&x.error_from(&y));
                for l in 0..4 {
                    let ratio = (hx[l] - hy[l]).abs() / d;
                    assert!(ratio <= lh[l] + 1e-12);
                    worst[l] = worst[l].max(ratio);
                }
            }
            // The sampled supremum approaches the analytic constant.
            for l in 0..4 {
                assert!(worst[l] > 0.95 * lh[l], "{weights:?} barrier {l}: {}", worst[l]);
            }
        }
    }

    #[test]
    fn zero_margin_is_untightened() {
        let p = SafeSetParams::default();
        let x = RelativeState::new(1.65, 0.0, 0.0);
        assert_eq!(tightened_barriers(&x, 0.0, &p, &[1.0; 4]), barrier_values(&x, &p).h);
    }

    #[test]
    fn tightening_subtracts_margin() {
        let p = SafeSetParams::default();
        let x = RelativeState::new(1.65, 0.0, 0.0);
        let t = tightened_barriers(&x, 0.2, &p, &[1.0; 4]);
        let want = [1.15, 1.15, 0.56, 0.56];
        for i in 0..4 {
            assert!(close(t[i], want[i]));
        }
    }

    #[test]
    fn containment_of_true_state() {
        let p = SafeSetParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for weights in [[1.0, 1.0, 1.0], [4.0, 0.5, 2.0]] {
            let w = NormWeights::new(weights).unwrap();
            let lh = lipschitz_constants(&w);
            for _ in 0..50_000 {
                let x_hat = RelativeState::new(
                    rng.random_range(0.2..3.2),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let margin = rng.random_range(0.0..0.5);
                // Random point inside the weighted ball of radius `margin`.
                let dir: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let n = w.norm(&dir).max(1e-12);
                let s = rng.random_range(0.0..1.0) * margin / n;
                let x = RelativeState::new(
                    x_hat.range + s * dir[0],
                    x_hat.leader_bearing + s * dir[1],
                    x_hat.follower_bearing + s * dir[2],
                );
                let ht = tightened_barriers(&x_hat, margin, &p, &lh);
                let h = barrier_values(&x, &p).h;
                for l in 0..4 {
                    assert!(h[l] >= ht[l] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn aligned_lie_rows() {
        let rows = lie_derivatives(
            &RelativeState::new(1.0, 0.0, 0.0),
            ControlInput::new(1.0, 0.0),
            &KinematicsParams::default(),
        )
        .unwrap();
        assert!(close(rows[0].drift, 1.0));
        assert!(close(rows[0].input[0], -1.0));
        assert!(close(rows[0].input[1], 0.0));
    }

    #[test]
    fn closed_form_bearing_row() {
        let kin = KinematicsParams::default();
        let x = RelativeState::new(1.7, 0.4, -0.3);
        let ul = ControlInput::new(0.3, 0.25);
        let rows = lie_derivatives(&x, ul, &kin).unwrap();
        let d = kin.camera_offset;
        let (l, a, p) = (x.range, x.leader_bearing, x.follower_bearing);
        assert!(close(rows[2].drift, 0.3 * a.sin() / l));
        assert!(close(rows[2].input[0], p.sin() / l));
        assert!(close(rows[2].input[1], -d * p.cos() / l - 1.0));
        assert!(close(rows[0].drift, 0.3 * a.cos()));
        assert!(close(rows[0].input[0], -p.cos()));
        assert!(close(rows[0].input[1], -d * p.sin()));

        let los = KinematicsParams {
            bearing_frame: BearingFrame::LineOfSight,
            ..kin
        };
        let rows = lie_derivatives(&x, ul, &los).unwrap();
        assert!(close(rows[2].input[1], -d * p.cos() / l));
        assert!(close(rows[3].input[1], d * p.cos() / l));
    }

    #[test]
    fn degenerate_estimate_is_rejected() {
        let r = lie_derivatives(
            &RelativeState::new(1e-4, 0.0, 0.0),
            ControlInput::ZERO,
            &KinematicsParams::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateState(_))));
    }

    fn state() -> impl Strategy<Value = RelativeState> {
        (0.2f64..3.5, -3.0f64..3.0, -1.5f64..1.5).prop_map(|(l, a, p)| RelativeState::new(l, a, p))
    }

    fn input(vmax: f64, wmax: f64) -> impl Strategy<Value = ControlInput> {
        (-vmax..vmax, -wmax..wmax).prop_map(|(v, w)| ControlInput::new(v, w))
    }

    proptest! {
        #[test]
        fn opposing_barriers_negate(x in state(), ul in input(1.0, 1.0)) {
            let rows = lie_derivatives(&x, ul, &KinematicsParams::default()).unwrap();
            for (a, b) in [(0, 1), (2, 3)] {
                prop_assert_eq!(rows[a].drift, -rows[b].drift);
                prop_assert_eq!(rows[a].input[0], -rows[b].input[0]);
                prop_assert_eq!(rows[a].input[1], -rows[b].input[1]);
            }
        }

        #[test]
        fn lie_rows_match_finite_differences(x in state(), u in input(1.0, 2.0), ul in input(1.0, 1.0)) {
            let kin = KinematicsParams::default();
            let p = SafeSetParams::default();
            let rows = lie_derivatives(&x, ul, &kin).unwrap();
            let xdot = state_derivative(&x, u, ul, &kin).unwrap();
            let eps = 1e-6;
            let moved = RelativeState::new(
                x.range + eps * xdot[0],
                x.leader_bearing + eps * xdot[1],
                x.follower_bearing + eps * xdot[2],
            );
            let (h0, h1) = (barrier_values(&x, &p).h, barrier_values(&moved, &p).h);
            for l in 0..4 {
                let fd = (h1[l] - h0[l]) / eps;
                prop_assert!((fd - rows[l].rate(u)).abs() < 1e-4);
            }
        }

        #[test]
        fn safe_iff_min_nonnegative(x in state()) {
            let p = SafeSetParams::default();
            let v = barrier_values(&x, &p);
            let inside = x.range >= p.range_min && x.range <= p.range_max
                && x.follower_bearing.abs() <= p.half_fov;
            prop_assert_eq!(inside, v.is_safe());
            prop_assert_eq!(v.min, v.h.iter().copied().fold(f64::INFINITY, f64::min));
        }

        #[test]
        fn tightening_monotone_in_margin(x in state(), m1 in 0.0f64..2.0, dm in 0.0f64..2.0) {
            let p = SafeSetParams::default();
            let lh = lipschitz_constants(&NormWeights::new([2.0, 1.0, 0.5]).unwrap());
            let a = tightened_barriers(&x, m1, &p, &lh);
            let b = tightened_barriers(&x, m1 + dm, &p, &lh);
            for l in 0..4 {
                prop_assert!(b[l] <= a[l]);
            }
        }
    }
}
