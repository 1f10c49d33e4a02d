//! Leader-follower relative kinematics and fixed-step integration.
//!
//! The follower's pose relative to its leader is `(L, alpha, phi)`: inter-agent
//! range, leader bearing and follower bearing. The kinematics are control
//! affine in the follower input,
//!
//! ```text
//! d/dt [L, alpha, phi] = f(x, u_leader) + g(x) u_follower
//! ```
//!
//! with `g` the 3x2 input map built from the camera offset `d`.
//!
//! Two conventions for the follower bearing are supported. With
//! [`BearingFrame::Camera`] (the default) `phi` is measured in the follower's
//! body-fixed camera frame, so the follower's own turn rate enters its rate
//! and `alpha + phi` equals the leader-minus-follower heading. With
//! [`BearingFrame::LineOfSight`] the `phi` row is the negated `alpha` input
//! row, i.e. the rate of the line-of-sight angle in the world frame, and
//! `alpha + phi` is driven by the leader's turn rate alone.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Relative state of a follower with respect to its leader.
///
/// Also used for perception estimates, which share the layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    /// Inter-agent distance `L`, meters.
    pub range: f64,
    /// Leader bearing angle `alpha`, radians.
    pub leader_bearing: f64,
    /// Follower (camera) bearing angle `phi`, radians.
    pub follower_bearing: f64,
}

/// A perception estimate of the relative state.
pub type StateEstimate = RelativeState;

impl RelativeState {
    pub fn new(range: f64, leader_bearing: f64, follower_bearing: f64) -> Self {
        Self {
            range,
            leader_bearing,
            follower_bearing,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.range, self.leader_bearing, self.follower_bearing]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Both bearings wrapped into `(-pi, pi]`.
    pub fn wrapped(self) -> Self {
        Self::new(
            self.range,
            wrap_angle(self.leader_bearing),
            wrap_angle(self.follower_bearing),
        )
    }

    /// Componentwise difference `self - other` with bearing differences wrapped.
    pub fn error_from(&self, other: &RelativeState) -> [f64; 3] {
        [
            self.range - other.range,
            wrap_angle(self.leader_bearing - other.leader_bearing),
            wrap_angle(self.follower_bearing - other.follower_bearing),
        ]
    }
}

/// Unicycle input pair for either robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Linear velocity `v`, m/s.
    pub linear: f64,
    /// Angular velocity `omega`, rad/s.
    pub angular: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        linear: 0.0,
        angular: 0.0,
    };

    pub fn new(linear: f64, angular: f64) -> Self {
        Self { linear, angular }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.linear, self.angular]
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn is_finite(&self) -> bool {
        self.linear.is_finite() && self.angular.is_finite()
    }
}

/// Frame in which the follower bearing `phi` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BearingFrame {
    /// Body-fixed camera frame: `phi` rate carries an extra `-omega` term.
    #[default]
    Camera,
    /// World-frame line-of-sight rate.
    LineOfSight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicsParams {
    /// Camera offset `d` ahead of the follower's wheel axis, meters.
    pub camera_offset: f64,
    /// Smallest admissible range during integration, meters.
    #[serde(default = "default_range_floor")]
    pub range_floor: f64,
    #[serde(default)]
    pub bearing_frame: BearingFrame,
}

fn default_range_floor() -> f64 {
    1e-3
}

impl Default for KinematicsParams {
    fn default() -> Self {
        Self {
            camera_offset: 0.254,
            range_floor: default_range_floor(),
            bearing_frame: BearingFrame::Camera,
        }
    }
}

impl KinematicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.camera_offset > 0.0 && self.camera_offset.is_finite()) {
            return Err(Error::Config(format!(
                "camera_offset must be positive, got {}",
                self.camera_offset
            )));
        }
        if !(self.range_floor > 0.0 && self.range_floor.is_finite()) {
            return Err(Error::Config(format!(
                "range_floor must be positive, got {}",
                self.range_floor
            )));
        }
        Ok(())
    }
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Drift term `f(x, u_leader)`.
pub fn drift(x: &RelativeState, u_leader: ControlInput) -> [f64; 3] {
    let (sa, ca) = x.leader_bearing.sin_cos();
    let l = x.range;
    [
        ca * u_leader.linear,
        -sa / l * u_leader.linear + u_leader.angular,
        sa / l * u_leader.linear,
    ]
}

/// Input map `g(x)`, rows `(L, alpha, phi)` by columns `(v, omega)`.
pub fn input_map(x: &RelativeState, p: &KinematicsParams) -> [[f64; 2]; 3] {
    let (sp, cp) = x.follower_bearing.sin_cos();
    let l = x.range;
    let d = p.camera_offset;
    let turn = match p.bearing_frame {
        BearingFrame::Camera => 1.0,
        BearingFrame::LineOfSight => 0.0,
    };
    [
        [-cp, -d * sp],
        [-sp / l, d * cp / l],
        [sp / l, -d * cp / l - turn],
    ]
}

/// `f(x, u_leader) + g(x) u_follower`.
pub fn state_derivative(
    x: &RelativeState,
    u_follower: ControlInput,
    u_leader: ControlInput,
    p: &KinematicsParams,
) -> Result<[f64; 3]> {
    if !(x.range > 0.0) || !x.is_finite() {
        return Err(Error::DegenerateState(format!("{x:?}")));
    }
    let f = drift(x, u_leader);
    let g = input_map(x, p);
    let u = u_follower.to_array();
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = f[i] + g[i][0] * u[0] + g[i][1] * u[1];
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateState(format!(
            "non-finite derivative {out:?} at {x:?}"
        )));
    }
    Ok(out)
}

fn offset(x: &RelativeState, k: &[f64; 3], h: f64) -> RelativeState {
    RelativeState::new(
        x.range + h * k[0],
        x.leader_bearing + h * k[1],
        x.follower_bearing + h * k[2],
    )
}

/// One classical RK4 step with both inputs held constant over `dt`.
///
/// Angles are wrapped after the step, never inside the stages. Any stage
/// whose range falls to `range_floor` or below aborts the step.
pub fn integrate_step(
    x: &RelativeState,
    u_follower: ControlInput,
    u_leader: ControlInput,
    p: &KinematicsParams,
    dt: f64,
) -> Result<RelativeState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let guard = |s: &RelativeState| -> Result<()> {
        if s.range <= p.range_floor || !s.is_finite() {
            Err(Error::DegenerateState(format!(
                "range {} at or below floor {}",
                s.range, p.range_floor
            )))
        } else {
            Ok(())
        }
    };
    guard(x)?;
    let k1 = state_derivative(x, u_follower, u_leader, p)?;
    let s2 = offset(x, &k1, dt / 2.0);
    guard(&s2)?;
    let k2 = state_derivative(&s2, u_follower, u_leader, p)?;
    let s3 = offset(x, &k2, dt / 2.0);
    guard(&s3)?;
    let k3 = state_derivative(&s3, u_follower, u_leader, p)?;
    let s4 = offset(x, &k3, dt);
    guard(&s4)?;
    let k4 = state_derivative(&s4, u_follower, u_leader, p)?;

    let mut next = x.to_array();
    for i in 0..3 {
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let next = RelativeState::from_array(next);
    guard(&next)?;
    Ok(next.wrapped())
}

/// One RK4 step of the continuous-time closed loop: the follower input is
/// re-evaluated from `feedback` at every stage instead of being held.
pub fn integrate_closed_loop_step<F>(
    x: &RelativeState,
    feedback: F,
    u_leader: ControlInput,
    p: &KinematicsParams,
    dt: f64,
) -> Result<RelativeState>
where
    F: Fn(&RelativeState) -> Result<ControlInput>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let rate = |s: &RelativeState| -> Result<[f64; 3]> {
        if s.range <= p.range_floor {
            return Err(Error::DegenerateState(format!("range {} at or below floor", s.range)));
        }
        state_derivative(s, feedback(s)?, u_leader, p)
    };
    let k1 = rate(x)?;
    let k2 = rate(&offset(x, &k1, dt / 2.0))?;
    let k3 = rate(&offset(x, &k2, dt / 2.0))?;
    let k4 = rate(&offset(x, &k3, dt))?;
    let mut next = x.to_array();
    for i in 0..3 {
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(RelativeState::from_array(next).wrapped())
}
