//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by construction, estimation, and experiment plumbing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdkwError {
    /// A dimension parameter was zero or otherwise unusable.
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Vector or matrix sizes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The finite-difference sensitivity must be strictly positive and finite.
    #[error("invalid sensitivity delta = {delta}; must be finite and > 0")]
    InvalidSensitivity {
        /// The offending value.
        delta: f64,
    },

    /// An objective measurement was NaN or infinite.
    #[error("non-finite measurement: {value}")]
    NonFiniteMeasurement {
        /// The offending value.
        value: f64,
    },

    /// A schedule parameter breaks the positivity requirements.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// The optimizer was asked to step past its simulation budget.
    #[error("simulation budget exhausted ({used} of {budget} used, step needs {needed})")]
    BudgetExhausted {
        /// Evaluations already spent.
        used: u64,
        /// Total evaluation budget.
        budget: u64,
        /// Evaluations the refused step would have consumed.
        needed: u64,
    },

    /// The optimizer configuration is unusable (budget too small, bad theta0, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// NMSE is undefined when the start point equals the optimum.
    #[error("undefined metric: theta0 equals theta_star, NMSE denominator is zero")]
    UndefinedMetric,

    /// A value supplied to the experiment runner or CLI could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Filesystem trouble while reading config or writing reports.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RdkwError {
    fn from(err: std::io::Error) -> Self {
        RdkwError::Io(err.to_string())
    }
}
