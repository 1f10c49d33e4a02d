//! Experiment configuration and its content hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use super::schedule::LeaderSchedule;
use super::Method;
use crate::barriers::{barrier_values, SafeSetParams};
use crate::conformal::{NormWeights, RiskTaxonomy};
use crate::controller::ControllerGains;
use crate::dynamics::{KinematicsParams, RelativeState};
use crate::error::{Error, Result};
use crate::perception::PerceptionModel;
use crate::qp::InputBox;

/// Uniform box the initial relative state is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateBox {
    pub range: [f64; 2],
    pub leader_bearing: [f64; 2],
    pub follower_bearing: [f64; 2],
}

impl Default for InitialStateBox {
    fn default() -> Self {
        Self {
            range: [0.8, 1.6],
            leader_bearing: [-0.2, 0.2],
            follower_bearing: [-0.3, 0.3],
        }
    }
}

impl InitialStateBox {
    fn intervals(&self) -> [(&'static str, [f64; 2]); 3] {
        [
            ("range", self.range),
            ("leader_bearing", self.leader_bearing),
            ("follower_bearing", self.follower_bearing),
        ]
    }

    pub fn validate(&self, safe: &SafeSetParams) -> Result<()> {
        for (name, [lo, hi]) in self.intervals() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("initial.{name} must be [lo, hi], got [{lo}, {hi}]")));
            }
        }
        for l in self.range {
            for p in self.follower_bearing {
                if !barrier_values(&RelativeState::new(l, 0.0, p), safe).is_safe() {
                    return Err(Error::Config(format!(
                        "initial-state box corner (L = {l}, phi = {p}) lies outside the safe set"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Miscoverage levels of the two single-radius baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineLevels {
    /// Level applied to the lowest-risk group's scores.
    pub low_risk_delta: f64,
    /// Level applied to the highest-risk group's scores.
    pub high_risk_delta: f64,
}

impl Default for BaselineLevels {
    fn default() -> Self {
        Self {
            low_risk_delta: 0.45,
            high_risk_delta: 0.01,
        }
    }
}

/// Campaign settings. Excluded from the config hash: changing them does not
/// change the distribution trajectories are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub seed: u64,
    pub method: Method,
    pub trials: usize,
    pub calibration_runs: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: 20260,
            method: Method::RiskAware,
            trials: 200,
            calibration_runs: 450,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Control and integration step, seconds.
    pub dt: f64,
    /// Trial length, seconds.
    pub horizon: f64,
    /// Width of the margin transition buffer.
    pub epsilon: f64,
    pub norm_weights: NormWeights,
    pub kinematics: KinematicsParams,
    pub safe_set: SafeSetParams,
    pub gains: ControllerGains,
    pub perception: PerceptionModel,
    pub taxonomy: RiskTaxonomy,
    pub baselines: BaselineLevels,
    pub input_box: InputBox,
    pub schedule: LeaderSchedule,
    pub initial: InitialStateBox,
    pub run: RunSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 40.0,
            epsilon: 0.12,
            norm_weights: NormWeights::bearing_weighted(),
            kinematics: KinematicsParams::default(),
            safe_set: SafeSetParams::default(),
            gains: ControllerGains::default(),
            perception: PerceptionModel::default(),
            taxonomy: RiskTaxonomy::default(),
            baselines: BaselineLevels::default(),
            input_box: InputBox::default(),
            schedule: LeaderSchedule::default(),
            initial: InitialStateBox::default(),
            run: RunSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be at least one step, got {}",
                self.horizon
            )));
        }
        self.kinematics.validate()?;
        self.safe_set.validate()?;
        self.gains.validate()?;
        self.perception.validate()?;
        self.taxonomy.validate()?;
        self.input_box.validate()?;
        self.schedule.validate()?;
        self.initial.validate(&self.safe_set)?;
        if self.taxonomy.num_groups() > 1 && !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(gap) = self
            .taxonomy
            .thresholds
            .windows(2)
            .map(|w| w[1] - w[0])
            .find(|gap| self.epsilon > *gap)
        {
            return Err(Error::Config(format!(
                "transition buffers overlap: epsilon {} exceeds threshold gap {gap}",
                self.epsilon
            )));
        }
        for d in [self.baselines.low_risk_delta, self.baselines.high_risk_delta] {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Config(format!("baseline delta must lie in (0, 1), got {d}")));
            }
        }
        Ok(())
    }

    /// Number of control steps per trial.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("<config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("<config>", e))
    }

    /// SHA-256 over the canonical JSON form of everything except `run`.
    ///
    /// Object keys are emitted sorted, so field order in the source file and
    /// the seed, method and campaign sizes never affect the hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes to JSON");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("run");
        }
        let canonical = serde_json::to_string(&value).expect("JSON value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
