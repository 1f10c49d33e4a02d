//! The conformal formation-aware CBF-QP and the per-step safety filter.
//!
//! Each barrier contributes the row
//!
//! ```text
//! L_g h_l(x_hat) u >= -L_f h_l(x_hat) - gamma_l (h_l(x_hat) - L_l q)
//! ```
//!
//! where `q` is the conformal margin for the current step. The margin is
//! held fixed over the step, so the tightened barrier shares the Lie
//! derivatives of the raw one.

use crate::barriers::{
    barrier_values, lie_derivatives, lipschitz_constants, tightened_barriers, SafeSetParams,
    NUM_BARRIERS,
};
use crate::conformal::{NormWeights, QuantileTable, RiskTaxonomy};
use crate::controller::{nominal_control, ControllerGains};
use crate::dynamics::{ControlInput, KinematicsParams, StateEstimate};
use crate::error::{Error, Result};
use crate::qp::{solve, HalfPlane, InputBox, QpProblem, QpSolution, QpStatus};

/// Build the QP for one step. Rows `0..4` are the barriers, rows `4..8` the box.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    x_hat: &StateEstimate,
    u_nom: ControlInput,
    u_leader: ControlInput,
    margin: f64,
    safe: &SafeSetParams,
    kin: &KinematicsParams,
    lipschitz: &[f64; NUM_BARRIERS],
    bounds: &InputBox,
) -> Result<QpProblem> {
    if margin.is_nan() || margin < 0.0 {
        return Err(Error::Config(format!("margin must be >= 0, got {margin}")));
    }
    let lie = lie_derivatives(x_hat, u_leader, kin)?;
    let h_tilde = tightened_barriers(x_hat, margin, safe, lipschitz);
    let rows = (0..NUM_BARRIERS)
        .map(|l| HalfPlane::new(lie[l].input, -lie[l].drift - safe.gains[l] * h_tilde[l]))
        .collect();
    Ok(QpProblem {
        target: u_nom,
        rows,
        bounds: *bounds,
    })
}

/// Where the per-step conformal margin comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginPolicy {
    /// No tightening: the plain CBF on estimates.
    Zero,
    /// One radius everywhere.
    Constant(f64),
    /// Risk-dependent radius with smooth transitions.
    RiskAware(QuantileTable),
}

impl MarginPolicy {
    pub fn margin(&self, h_min: f64) -> f64 {
        match self {
            MarginPolicy::Zero => 0.0,
            MarginPolicy::Constant(q) => *q,
            MarginPolicy::RiskAware(table) => table.smooth_margin(h_min),
        }
    }
}

/// Everything one filter step decided.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    /// Input sent to the follower: the QP solution, or zero when infeasible.
    pub applied: ControlInput,
    pub nominal: ControlInput,
    pub margin: f64,
    /// Risk group of the estimate (zero-based).
    pub group: usize,
    pub h_min: f64,
    pub solution: QpSolution,
}

impl StepDecision {
    pub fn status(&self) -> QpStatus {
        self.solution.status
    }
}

#[derive(Debug, Clone)]
pub struct SafetyFilter {
    pub gains: ControllerGains,
    pub safe: SafeSetParams,
    pub kin: KinematicsParams,
    pub bounds: InputBox,
    /// Taxonomy used to label steps with a risk group.
    pub taxonomy: RiskTaxonomy,
    pub policy: MarginPolicy,
    lipschitz: [f64; NUM_BARRIERS],
}

impl SafetyFilter {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gains: ControllerGains,
        safe: SafeSetParams,
        kin: KinematicsParams,
        bounds: InputBox,
        taxonomy: RiskTaxonomy,
        weights: &NormWeights,
        policy: MarginPolicy,
    ) -> Result<Self> {
        gains.validate()?;
        safe.validate()?;
        kin.validate()?;
        bounds.validate()?;
        taxonomy.validate()?;
        Ok(Self {
            gains,
            safe,
            kin,
            bounds,
            taxonomy,
            policy,
            lipschitz: lipschitz_constants(weights),
        })
    }

    pub fn lipschitz(&self) -> &[f64; NUM_BARRIERS] {
        &self.lipschitz
    }

    /// Nominal control, margin lookup and QP projection for one estimate.
    pub fn step(&self, x_hat: &StateEstimate, u_leader: ControlInput) -> Result<StepDecision> {
        let h_min = barrier_values(x_hat, &self.safe).min;
        let group = self.taxonomy.assign(h_min);
        let margin = self.policy.margin(h_min);
        let nominal = nominal_control(x_hat, u_leader, &self.gains, &self.kin)?;
        let problem = assemble(
            x_hat,
            nominal,
            u_leader,
            margin,
            &self.safe,
            &self.kin,
            &self.lipschitz,
            &self.bounds,
        )?;
        let solution = solve(&problem);
        let applied = match solution.status {
            QpStatus::Optimal => solution.u,
            QpStatus::Infeasible => ControlInput::ZERO,
        };
        Ok(StepDecision {
            applied,
            nominal,
            margin,
            group,
            h_min,
            solution,
        })
    }
}
