//! Power-law step-size and sensitivity sequences.
//!
//! A run is driven by two diminishing sequences: the step size
//! `a_n = a_scale / (n + B + 1)^alpha` applied to the gradient estimate, and
//! the sensitivity `delta_n = c / (n + 1)^gamma` that sets the perturbation
//! radius. Convergence of the iteration requires the usual stochastic
//! approximation conditions: both sequences vanish, the steps sum to
//! infinity, and `sum_n (a_n / delta_n)^2` is finite. For power laws those
//! reduce to exponent inequalities, which [`StepSchedule::validate`] checks.

use std::fmt;

use crate::error::RdkwError;

/// Default decay exponent for the step size; a standard finite-sample choice.
pub const DEFAULT_ALPHA: f64 = 0.602;
/// Default decay exponent for the sensitivity.
pub const DEFAULT_GAMMA: f64 = 0.101;
/// Default numerator of the step-size sequence.
pub const DEFAULT_A_SCALE: f64 = 1.0;
/// Default numerator of the sensitivity sequence, sized for the benchmark
/// losses: small enough to stay in their well-behaved region, large enough
/// to keep single-measurement estimates from amplifying the raw loss value.
pub const DEFAULT_SENSITIVITY_SCALE: f64 = 1.0;
/// Default stability offset, as a fraction of the iteration horizon.
pub const DEFAULT_STABILITY_FRACTION: f64 = 0.1;

/// The two power-law sequences, immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    a_scale: f64,
    alpha: f64,
    stability: f64,
    c: f64,
    gamma: f64,
}

/// One failed convergence condition, named.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleViolation {
    /// `alpha <= 0`: the step size does not tend to zero.
    StepNotVanishing,
    /// `gamma <= 0`: the sensitivity does not tend to zero.
    SensitivityNotVanishing,
    /// `alpha > 1`: the step sizes are summable, so the iteration stalls.
    StepSumConverges,
    /// `2(alpha - gamma) <= 1`: the squared step/sensitivity ratios diverge.
    RatioSquareSumDiverges,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::StepNotVanishing => write!(f, "step size a_n does not tend to 0 (requires alpha > 0)"),
            Self::SensitivityNotVanishing => {
                write!(f, "sensitivity delta_n does not tend to 0 (requires gamma > 0)")
            }
            Self::StepSumConverges => {
                write!(f, "step sizes a_n are summable, iteration cannot reach distant optima (requires alpha <= 1)")
            }
            Self::RatioSquareSumDiverges => {
                write!(f, "sum of (a_n/delta_n)^2 diverges (requires 2(alpha-gamma) > 1)")
            }
        }
    }
}

/// Outcome of checking the convergence conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleVerdict {
    pub ok: bool,
    pub violations: Vec<ScheduleViolation>,
}

impl StepSchedule {
    /// Builds a schedule after checking that both sequences stay positive
    /// and finite: `a_scale > 0`, `c > 0`, `stability >= 0`, all finite.
    ///
    /// Exponents may be anything finite; whether they satisfy the
    /// convergence conditions is a separate question for [`validate`](Self::validate).
    pub fn new(
        a_scale: f64,
        alpha: f64,
        stability: f64,
        c: f64,
        gamma: f64,
    ) -> Result<Self, RdkwError> {
        if !a_scale.is_finite() || a_scale <= 0.0 {
            return Err(RdkwError::InvalidSchedule(format!(
                "a_scale must be a positive finite number, got {a_scale}"
            )));
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(RdkwError::InvalidSchedule(format!(
                "sensitivity scale c must be a positive finite number, got {c}"
            )));
        }
        if !stability.is_finite() || stability < 0.0 {
            return Err(RdkwError::InvalidSchedule(format!(
                "stability offset must be a non-negative finite number, got {stability}"
            )));
        }
        if !alpha.is_finite() || !gamma.is_finite() {
            return Err(RdkwError::InvalidSchedule(format!(
                "exponents must be finite, got alpha={alpha}, gamma={gamma}"
            )));
        }
        Ok(Self {
            a_scale,
            alpha,
            stability,
            c,
            gamma,
        })
    }

    /// The default schedule for a run of `n_end` iterations: exponents
    /// 0.602 / 0.101 and stability offset at 10% of the horizon.
    pub fn for_horizon(n_end: u64) -> Self {
        Self {
            a_scale: DEFAULT_A_SCALE,
            alpha: DEFAULT_ALPHA,
            stability: DEFAULT_STABILITY_FRACTION * n_end as f64,
            c: DEFAULT_SENSITIVITY_SCALE,
            gamma: DEFAULT_GAMMA,
        }
    }

    /// Exact `(a_n, delta_n)` for iteration `n`.
    pub fn step_sizes(&self, n: u64) -> (f64, f64) {
        let nf = n as f64;
        let a = self.a_scale / (nf + self.stability + 1.0).powf(self.alpha);
        let delta = self.c / (nf + 1.0).powf(self.gamma);
        (a, delta)
    }

    /// Checks the four exponent conditions equivalent to the convergence
    /// requirements for power-law sequences, reporting every violation.
    pub fn validate(&self) -> ScheduleVerdict {
        let mut violations = Vec::new();
        if self.alpha <= 0.0 {
            violations.push(ScheduleViolation::StepNotVanishing);
        }
        if self.gamma <= 0.0 {
            violations.push(ScheduleViolation::SensitivityNotVanishing);
        }
        if self.alpha > 1.0 {
            violations.push(ScheduleViolation::StepSumConverges);
        }
        if 2.0 * (self.alpha - self.gamma) <= 1.0 {
            violations.push(ScheduleViolation::RatioSquareSumDiverges);
        }
        ScheduleVerdict {
            ok: violations.is_empty(),
            violations,
        }
    }

    pub fn a_scale(&self) -> f64 {
        self.a_scale
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stability(&self) -> f64 {
        self.stability
    }

    pub fn sensitivity_scale(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}
