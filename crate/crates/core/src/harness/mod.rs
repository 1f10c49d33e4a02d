//! Experiment orchestration: configuration, leader schedules, single-trial
//! simulation, Monte Carlo campaigns, statistics and report files.
//!
//! Calibration and evaluation share one simulation path; they differ only in
//! the seed stream and in where the per-step margin comes from.

pub mod campaign;
pub mod config;
pub mod report;
pub mod schedule;
pub mod sim;
pub mod stats;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use campaign::{
    run_calibration_campaign, run_evaluation, run_pipeline, Baselines, CalibrationArtifacts,
    EvaluationRun,
};
pub use config::ExperimentConfig;
pub use schedule::{LeaderSchedule, Segment};
pub use sim::{simulate_trial, FailureMode, TrialOutcome};
pub use stats::{summarize, wilson_interval, MethodSummary};

/// How the follower obtains its per-step conformal margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain CBF on the estimates, no margin. Also the calibration pipeline.
    Nominal,
    /// One optimistic radius calibrated on the low-risk group only.
    GlobalLow,
    /// One pessimistic radius calibrated on the high-risk group only.
    GlobalHigh,
    /// Group-conditional radii with smooth transitions.
    RiskAware,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Nominal,
        Method::GlobalLow,
        Method::GlobalHigh,
        Method::RiskAware,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nominal => "nominal",
            Method::GlobalLow => "global_low",
            Method::GlobalHigh => "global_high",
            Method::RiskAware => "risk_aware",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; expected nominal, global_low, global_high or risk_aware"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("risk-aware".parse::<Method>().is_err());
    }
}
