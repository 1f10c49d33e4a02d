//! Synthetic onboard perception.
//!
//! Bearing is estimated classifier-style: the camera field of view is cut into
//! `n_bins` uniform classes and the estimate is always a bin center. Errors
//! grow as the true state approaches the safe-set boundary: the predicted
//! class drifts by a random integer offset whose spread increases with
//! boundary proximity, and the range noise widens the same way, as a depth
//! average over a bounding box that the image edge clips.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{RelativeState, StateEstimate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionModel {
    /// Number of bearing classes across the field of view; odd so a center bin exists.
    pub n_bins: usize,
    /// Full horizontal field of view `2 psi_max`, radians.
    pub fov: f64,
    /// Range noise standard deviation in the interior, meters.
    pub sigma_range_base: f64,
    /// Additional range noise standard deviation at the boundary, meters.
    pub sigma_range_boundary: f64,
    /// Bin-offset standard deviation in the interior, in bins.
    pub bin_spread_base: f64,
    /// Additional bin-offset standard deviation at the boundary, in bins.
    pub bin_spread_boundary: f64,
    /// Leader bearing noise standard deviation, radians.
    pub sigma_leader_bearing: f64,
    /// Barrier value at which boundary proximity reaches zero.
    pub risk_scale: f64,
}

impl Default for PerceptionModel {
    fn default() -> Self {
        Self {
            n_bins: 21,
            fov: 1.52,
            sigma_range_base: 0.01,
            sigma_range_boundary: 0.2,
            bin_spread_base: 0.05,
            bin_spread_boundary: 1.5,
            sigma_leader_bearing: 0.01,
            risk_scale: 0.3,
        }
    }
}

impl PerceptionModel {
    /// A model whose only error source is bearing quantization.
    pub fn noiseless(n_bins: usize, fov: f64) -> Self {
        Self {
            n_bins,
            fov,
            sigma_range_base: 0.0,
            sigma_range_boundary: 0.0,
            bin_spread_base: 0.0,
            bin_spread_boundary: 0.0,
            sigma_leader_bearing: 0.0,
            risk_scale: 0.45,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 || self.n_bins % 2 == 0 {
            return Err(Error::Config(format!(
                "n_bins must be odd and positive, got {}",
                self.n_bins
            )));
        }
        if !(self.fov > 0.0 && self.fov.is_finite()) {
            return Err(Error::Config(format!("fov must be positive, got {}", self.fov)));
        }
        let coeffs = [
            ("sigma_range_base", self.sigma_range_base),
            ("sigma_range_boundary", self.sigma_range_boundary),
            ("bin_spread_base", self.bin_spread_base),
            ("bin_spread_boundary", self.bin_spread_boundary),
            ("sigma_leader_bearing", self.sigma_leader_bearing),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.risk_scale > 0.0 && self.risk_scale.is_finite()) {
            return Err(Error::Config(format!(
                "risk_scale must be positive, got {}",
                self.risk_scale
            )));
        }
        Ok(())
    }

    pub fn bin_width(&self) -> f64 {
        self.fov / self.n_bins as f64
    }

    /// Bin index of a bearing, clamped to the valid classes `0..n_bins`.
    pub fn bin_index(&self, bearing: f64) -> i64 {
        let raw = ((bearing + self.fov / 2.0) / self.bin_width()).floor() as i64;
        raw.clamp(0, self.n_bins as i64 - 1)
    }

    /// Center of bin `k` on the (unbounded) bin lattice.
    pub fn bin_center(&self, k: i64) -> f64 {
        let center = (self.n_bins as i64 - 1) / 2;
        (k - center) as f64 * self.bin_width()
    }

    /// Whether a bearing lies on the bin lattice.
    pub fn on_lattice(&self, bearing: f64) -> bool {
        let steps = bearing / self.bin_width();
        (steps - steps.round()).abs() < 1e-9
    }

    pub fn quantize(&self, bearing: f64) -> f64 {
        self.bin_center(self.bin_index(bearing))
    }

    /// `clamp(1 - h / risk_scale, 0, 1)`: zero deep inside the safe set, one at its boundary.
    pub fn boundary_proximity(&self, risk: f64) -> f64 {
        (1.0 - risk / self.risk_scale).clamp(0.0, 1.0)
    }

    pub fn bin_spread(&self, risk: f64) -> f64 {
        self.bin_spread_base + self.bin_spread_boundary * self.boundary_proximity(risk)
    }

    pub fn range_sigma(&self, risk: f64) -> f64 {
        self.sigma_range_base + self.sigma_range_boundary * self.boundary_proximity(risk)
    }

    /// Estimate the relative state from the truth and its barrier value `risk`.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        truth: &RelativeState,
        risk: f64,
        rng: &mut R,
    ) -> StateEstimate {
        let offset = sample_bin_offset(rng, self.bin_spread(risk));
        let bearing = self.bin_center(self.bin_index(truth.follower_bearing) + offset);

        let range = truncated_normal(rng, truth.range, self.range_sigma(risk));
        let leader_bearing = truth.leader_bearing + gaussian(rng, self.sigma_leader_bearing);

        RelativeState::new(range, leader_bearing, bearing)
    }
}

/// Zero-mean integer offset with standard deviation exactly `spread`.
///
/// Symmetric three-point law on `{-k, 0, k}` with `k = max(1, ceil(spread))`
/// and `P(+-k) = spread^2 / (2 k^2)`.
pub fn sample_bin_offset<R: Rng + ?Sized>(rng: &mut R, spread: f64) -> i64 {
    if !(spread > 0.0) {
        return 0;
    }
    let k = spread.ceil().max(1.0);
    let p_side = spread * spread / (2.0 * k * k);
    let u: f64 = rng.random();
    if u < p_side {
        -(k as i64)
    } else if u < 2.0 * p_side {
        k as i64
    } else {
        0
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        // sigma validated finite and positive
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    for _ in 0..64 {
        let v = mean + gaussian(rng, sigma);
        if v > 0.0 {
            return v;
        }
    }
    mean.max(f64::MIN_POSITIVE)
}
