use std::fmt;

use serde::{Deserialize, Serialize};

use super::RunnerError;

/// Reference wall-clock for one task-specific sweep, in GPU hours.
pub const TASK_SPECIFIC_HOURS: f64 = 30.0;
/// Reference wall-clock for the multi-task and zero-shot sweeps together, in GPU hours.
pub const MULTI_AND_ZERO_SHOT_HOURS: f64 = 60.0;
/// Reference on-demand price per GPU hour.
pub const GPU_HOURLY_RATE: f64 = 3.36;

/// A money amount in integer cents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Currency {
    pub cents: i64,
}

impl Currency {
    pub fn from_cents(cents: i64) -> Self {
        Currency { cents }
    }

    pub fn as_f64(self) -> f64 {
        self.cents as f64 / 100.0
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.cents < 0 { "-" } else { "" };
        let c = self.cents.unsigned_abs();
        write!(f, "{sign}{}.{:02}", c / 100, c % 100)
    }
}

impl std::ops::Add for Currency {
    type Output = Currency;
    fn add(self, o: Currency) -> Currency {
        Currency::from_cents(self.cents + o.cents)
    }
}

/// `gpu_hours × hourly_rate`, rounded to the nearest cent.
pub fn estimate_cost(gpu_hours: f64, hourly_rate: f64) -> Result<Currency, RunnerError> {
    for (name, v) in [("gpu_hours", gpu_hours), ("hourly_rate", hourly_rate)] {
        if !v.is_finite() || v < 0.0 {
            return Err(RunnerError::InvalidCost(format!("{name} must be a finite non-negative number, got {v}")));
        }
    }
    let cents = (gpu_hours * hourly_rate * 100.0).round();
    if cents > i64::MAX as f64 {
        return Err(RunnerError::InvalidCost("amount out of range".into()));
    }
    Ok(Currency::from_cents(cents as i64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_costs() {
        let ts = estimate_cost(TASK_SPECIFIC_HOURS, GPU_HOURLY_RATE).unwrap();
        assert_eq!(ts.to_string(), "100.80");
        let all = estimate_cost(TASK_SPECIFIC_HOURS + MULTI_AND_ZERO_SHOT_HOURS, GPU_HOURLY_RATE).unwrap();
        assert_eq!(all.to_string(), "302.40");
    }

    #[test]
    fn formatting_and_errors() {
        assert_eq!(Currency::from_cents(5).to_string(), "0.05");
        assert_eq!(Currency::from_cents(-150).to_string(), "-1.50");
        assert_eq!(estimate_cost(0.0, 3.36).unwrap().cents, 0);
        assert!(estimate_cost(-1.0, 1.0).is_err());
        assert!(estimate_cost(f64::NAN, 1.0).is_err());
        assert!(estimate_cost(1.0, f64::INFINITY).is_err());
    }
}
