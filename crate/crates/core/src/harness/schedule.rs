//! Piecewise-constant leader input schedules.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// Seconds.
    pub duration: f64,
    pub linear: f64,
    pub angular: f64,
}

impl Segment {
    pub fn new(duration: f64, linear: f64, angular: f64) -> Self {
        Self {
            duration,
            linear,
            angular,
        }
    }
}

/// Leader inputs as consecutive segments; the last one holds past its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderSchedule {
    pub segments: Vec<Segment>,
}

impl Default for LeaderSchedule {
    /// Straight, moderate turn, straight, sharp turn, straight.
    fn default() -> Self {
        Self {
            segments: vec![
                Segment::new(8.0, 0.3, 0.0),
                Segment::new(10.0, 0.3, 0.1),
                Segment::new(4.0, 0.3, 0.0),
                Segment::new(10.0, 0.3, 0.2),
                Segment::new(8.0, 0.3, 0.0),
            ],
        }
    }
}

impl LeaderSchedule {
    pub fn constant(linear: f64, angular: f64) -> Self {
        Self {
            segments: vec![Segment::new(f64::INFINITY, linear, angular)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("leader schedule needs at least one segment".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.linear.is_finite() || !s.angular.is_finite() {
                return Err(Error::Config(format!("invalid schedule segment {i}: {s:?}")));
            }
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Leader input at time `t`; segment boundaries belong to the later segment.
    pub fn at(&self, t: f64) -> ControlInput {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.duration;
            if t < end {
                return ControlInput::new(s.linear, s.angular);
            }
        }
        let last = self.segments.last().expect("validated non-empty schedule");
        ControlInput::new(last.linear, last.angular)
    }
}
