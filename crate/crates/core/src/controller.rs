//! Feedback-linearising formation tracking law on `z = (L, alpha)`.
//!
//! With `g_z` the `(L, alpha)` rows of the input map and `f_z` the matching
//! drift rows, the nominal input is
//!
//! ```text
//! u = g_z^{-1} ( K (z_d - z) - f_z(z, u_leader) )
//! ```
//!
//! which makes the tracking error decay as `e' = -K e` under exact state
//! feedback. `det g_z = -d / L`, so the inverse exists whenever `d > 0`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{drift, input_map, wrap_angle, ControlInput, KinematicsParams, RelativeState};
use crate::error::{Error, Result};

const MIN_DET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    /// Range gain `K_L`, 1/s.
    pub range_gain: f64,
    /// Leader-bearing gain `K_alpha`, 1/s.
    pub bearing_gain: f64,
    pub range_setpoint: f64,
    pub bearing_setpoint: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            range_gain: 3.0,
            bearing_gain: 1.85,
            range_setpoint: 1.2,
            bearing_setpoint: 0.0,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_gain > 0.0 && self.bearing_gain > 0.0)
            || !self.range_gain.is_finite()
            || !self.bearing_gain.is_finite()
        {
            return Err(Error::Config(format!(
                "controller gains must be positive, got {} and {}",
                self.range_gain, self.bearing_gain
            )));
        }
        if !(self.range_setpoint > 0.0 && self.bearing_setpoint.is_finite()) {
            return Err(Error::Config("formation setpoint must be finite with positive range".into()));
        }
        Ok(())
    }

    /// Tracking error `(L - L_d, alpha - alpha_d)` with the bearing error wrapped.
    pub fn tracking_error(&self, x: &RelativeState) -> [f64; 2] {
        [
            x.range - self.range_setpoint,
            wrap_angle(x.leader_bearing - self.bearing_setpoint),
        ]
    }
}

/// `(L, alpha)` block of the input map and its determinant.
pub fn tracking_input_map(x: &RelativeState, kin: &KinematicsParams) -> ([[f64; 2]; 2], f64) {
    let g = input_map(x, kin);
    let gz = [g[0], g[1]];
    let det = gz[0][0] * gz[1][1] - gz[0][1] * gz[1][0];
    (gz, det)
}

pub fn nominal_control(
    x_hat: &RelativeState,
    u_leader: ControlInput,
    gains: &ControllerGains,
    kin: &KinematicsParams,
) -> Result<ControlInput> {
    if !(x_hat.range > kin.range_floor) || !x_hat.is_finite() {
        return Err(Error::DegenerateState(format!(
            "estimate range {} at or below floor {}",
            x_hat.range, kin.range_floor
        )));
    }
    let (gz, det) = tracking_input_map(x_hat, kin);
    if det.abs() < MIN_DET {
        return Err(Error::SingularInputMap(det.abs()));
    }
    let f = drift(x_hat, u_leader);
    let e = gains.tracking_error(x_hat);
    let rhs = [
        -gains.range_gain * e[0] - f[0],
        -gains.bearing_gain * e[1] - f[1],
    ];
    Ok(ControlInput::new(
        (gz[1][1] * rhs[0] - gz[0][1] * rhs[1]) / det,
        (-gz[1][0] * rhs[0] + gz[0][0] * rhs[1]) / det,
    ))
}
