//! Linear schedules: exploration ε, importance-correction β, and the
//! warm-up of the selection ratio η.
//!
//! All schedules are branch-clamped — once past the ramp they return the
//! end value itself rather than an arithmetic reconstruction of it — so
//! endpoint contracts hold exactly in floating point.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
}

/// Linear interpolation from `start` at t=0 to `end` at t=`steps`, constant
/// afterwards. `steps == 0` means "always at end".
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn constant(value: f64) -> Self {
        Self { start: value, end: value, steps: 0 }
    }

    pub fn at(&self, t: u64) -> f64 {
        if t >= self.steps {
            return self.end;
        }
        let frac = t as f64 / self.steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Warm-up schedule for the selection ratio: η rises linearly from
/// `eta_start` to `eta_end` over the first `proportion` of `t_max` steps,
/// then stays at `eta_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSchedule {
    pub eta_start: f64,
    pub eta_end: f64,
    pub proportion: f64,
    pub t_max: u64,
}

impl RatioSchedule {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let ok_eta = |v: f64| v > 0.0 && v <= 1.0;
        if !ok_eta(self.eta_start) || !ok_eta(self.eta_end) {
            return Err(ScheduleError::Invalid(format!(
                "ratio endpoints must lie in (0, 1], got {} -> {}",
                self.eta_start, self.eta_end
            )));
        }
        if self.eta_start > self.eta_end {
            return Err(ScheduleError::Invalid(format!(
                "ratio must be nondecreasing, got {} -> {}",
                self.eta_start, self.eta_end
            )));
        }
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return Err(ScheduleError::Invalid(format!(
                "warm-up proportion must lie in (0, 1], got {}",
                self.proportion
            )));
        }
        if self.t_max == 0 {
            return Err(ScheduleError::Invalid("t_max must be positive".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: u64) -> f64 {
        let ramp = self.proportion * self.t_max as f64;
        if t as f64 >= ramp {
            return self.eta_end;
        }
        self.eta_start + (self.eta_end - self.eta_start) * (t as f64 / ramp)
    }
}

/// Free-function form of [`RatioSchedule::at`].
pub fn sample_ratio(t: u64, schedule: &RatioSchedule) -> f64 {
    schedule.at(t)
}
