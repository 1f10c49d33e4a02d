//! Formation-aware conformal safety filtering for a vision-based
//! leader-follower pair.
//!
//! The crate is organised bottom-up:
//!
//! - [`dynamics`]: relative unicycle kinematics `(L, alpha, phi)` and a fixed-step RK4 integrator.
//! - [`perception`]: a synthetic, heteroscedastic stand-in for the onboard bearing/range estimator.
//! - [`barriers`]: the field-of-view safe set, Lipschitz tightening and Lie derivatives.
//! - [`conformal`]: trajectory nonconformity scores, Mondrian risk groups, group quantiles and
//!   the smooth interpolated margin.
//! - [`controller`]: the feedback-linearising formation tracking law.
//! - [`qp`]: an exact active-set solver for the two-input safety QP, plus a phase-1 LP.
//! - [`filter`]: assembly of the conformal CBF-QP and the per-step safety filter.
//! - [`harness`]: leader schedules, Monte Carlo campaigns, statistics and report files.
//! - [`oracle`]: brute-force reference checks for the QP solver and the conformal quantile.

pub mod barriers;
pub mod conformal;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod harness;
pub mod oracle;
pub mod par;
pub mod perception;
pub mod qp;

pub use error::{Error, Result};
