//! Gradient estimates from noisy function measurements.
//!
//! Both estimators project a finite-difference quotient onto the current
//! perturbation direction `d`:
//!
//! * two-sided: `((y_plus - y_minus) / (2 * delta)) * d` from measurements at
//!   `theta + delta * d` and `theta - delta * d` (two evaluations per step);
//! * one-sided: `(y_plus / delta) * d` from the single measurement at
//!   `theta + delta * d`.
//!
//! The one-sided form trades half the measurement cost for an extra
//! `J(theta) / delta` term along `d`; averaged over a full deterministic
//! cycle that term cancels through the zero-sum property.

use ndarray::{Array1, ArrayView1};

use crate::error::RdkwError;

/// Which estimator a run uses, fixing its per-step measurement cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Difference of two measurements per step.
    TwoSided,
    /// Single measurement per step.
    OneSided,
}

impl EstimatorKind {
    /// Measurements consumed by one iteration.
    pub fn simulations_per_step(self) -> u64 {
        match self {
            EstimatorKind::TwoSided => 2,
            EstimatorKind::OneSided => 1,
        }
    }
}

/// A single validated scalar measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement(f64);

impl Measurement {
    /// Wraps a raw measurement, rejecting NaN and infinities.
    pub fn new(value: f64) -> Result<Self, RdkwError> {
        if !value.is_finite() {
            return Err(RdkwError::NonFiniteMeasurement { value });
        }
        Ok(Self(value))
    }

    /// The underlying value.
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_delta(delta: f64) -> Result<(), RdkwError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(RdkwError::InvalidSensitivity { delta });
    }
    Ok(())
}

/// Two-sided estimate `((y_plus - y_minus) / (2 * delta)) * d`.
pub fn two_sided_estimate(
    y_plus: Measurement,
    y_minus: Measurement,
    direction: ArrayView1<'_, f64>,
    delta: f64,
) -> Result<Array1<f64>, RdkwError> {
    check_delta(delta)?;
    let quotient = (y_plus.value() - y_minus.value()) / (2.0 * delta);
    Ok(direction.mapv(|di| quotient * di))
}

/// One-sided estimate `(y_plus / delta) * d`.
pub fn one_sided_estimate(
    y_plus: Measurement,
    direction: ArrayView1<'_, f64>,
    delta: f64,
) -> Result<Array1<f64>, RdkwError> {
    check_delta(delta)?;
    let quotient = y_plus.value() / delta;
    Ok(direction.mapv(|di| quotient * di))
}
