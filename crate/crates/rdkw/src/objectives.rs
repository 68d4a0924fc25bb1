//! Benchmark losses, the additive noise model, and the NMSE metric.
//!
//! Two closed-form losses are built in, both parametrized by the matrix `A`
//! where `p * A` is upper triangular with unit entries:
//!
//! * quadratic: `J(theta) = theta^T A theta + b^T theta` with `b` all ones,
//!   minimized at the solution of `(A + A^T) theta* = -b`;
//! * fourth-order: `J(theta) = ||A theta||^2 + 0.1 sum (A theta)_j^3
//!   + 0.01 sum (A theta)_j^4`, minimized at the origin.
//!
//! A [`NoisyObjective`] wraps any loss with measurement noise `[theta^T, 1] z`
//! where `z ~ N(0, sigma^2 I_{p+1})`, drawn fresh per evaluation from a
//! seeded generator, so the same seed replays the same measurement stream.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::RdkwError;

/// Quadratic loss `theta^T A theta + b^T theta` with its cached minimizer.
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    a: Array2<f64>,
    b: Array1<f64>,
    theta_star: Array1<f64>,
}

/// Fourth-order loss built from the same matrix `A`; minimized at 0.
#[derive(Debug, Clone)]
pub struct FourthOrderSpec {
    a: Array2<f64>,
    theta_star: Array1<f64>,
}

/// Shared value function backing a [`Loss::Custom`] objective.
pub type ValueFn = Arc<dyn Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync>;

/// A loss under optimization: built in or user supplied.
#[derive(Clone)]
pub enum Loss {
    Quadratic(QuadraticSpec),
    FourthOrder(FourthOrderSpec),
    /// User-pluggable objective: a value function plus an optional known
    /// minimizer for error metrics.
    Custom {
        dimension: usize,
        value: ValueFn,
        theta_star: Option<Array1<f64>>,
    },
}

impl fmt::Debug for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loss::Quadratic(spec) => f.debug_tuple("Quadratic").field(spec).finish(),
            Loss::FourthOrder(spec) => f.debug_tuple("FourthOrder").field(spec).finish(),
            Loss::Custom { dimension, .. } => f
                .debug_struct("Custom")
                .field("dimension", dimension)
                .finish_non_exhaustive(),
        }
    }
}

/// A loss plus the additive measurement-noise model.
///
/// Owns its generator and evaluation counter, so one instance belongs to
/// exactly one run; concurrent runs each get their own.
#[derive(Debug, Clone)]
pub struct NoisyObjective {
    loss: Loss,
    sigma: f64,
    rng: ChaCha8Rng,
    evaluations: u64,
}

/// The benchmark matrix: `p * A` upper triangular with all nonzero entries 1.
fn benchmark_matrix(p: usize) -> Array2<f64> {
    let inv = 1.0 / p as f64;
    Array2::from_shape_fn((p, p), |(i, j)| if j >= i { inv } else { 0.0 })
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
///
/// Small dense systems only (p ~ tens); fails on singular input.
fn solve_linear(m: &Array2<f64>, rhs: &Array1<f64>) -> Result<Array1<f64>, RdkwError> {
    let n = rhs.len();
    let mut aug = m.clone();
    let mut x = rhs.clone();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| {
                aug[[r, col]]
                    .abs()
                    .partial_cmp(&aug[[s, col]].abs())
                    .unwrap()
            })
            .unwrap();
        if aug[[pivot_row, col]].abs() < 1e-12 {
            return Err(RdkwError::InvalidConfig(
                "loss curvature matrix is singular, minimizer is not unique".into(),
            ));
        }
        if pivot_row != col {
            for j in 0..n {
                aug.swap([col, j], [pivot_row, j]);
            }
            x.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = aug[[row, col]] / aug[[col, col]];
            for j in col..n {
                aug[[row, j]] -= factor * aug[[col, j]];
            }
            x[row] -= factor * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in col + 1..n {
            acc -= aug[[col, j]] * x[j];
        }
        x[col] = acc / aug[[col, col]];
    }
    Ok(x)
}

fn check_dimension(expect: usize, got: usize) -> Result<(), RdkwError> {
    if expect != got {
        return Err(RdkwError::DimensionMismatch(format!(
            "objective expects dimension {expect}, got {got}"
        )));
    }
    Ok(())
}

impl QuadraticSpec {
    /// Builds the loss from an explicit `A` and `b`, solving
    /// `(A + A^T) theta* = -b` once for the minimizer.
    pub fn new(a: Array2<f64>, b: Array1<f64>) -> Result<Self, RdkwError> {
        let (rows, cols) = a.dim();
        if rows == 0 || rows != cols || b.len() != rows {
            return Err(RdkwError::DimensionMismatch(format!(
                "need square A and matching b, got A {rows}x{cols}, b len {}",
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(RdkwError::InvalidConfig(
                "loss coefficients must be finite".into(),
            ));
        }
        let hessian = &a + &a.t();
        let theta_star = solve_linear(&hessian, &(-&b))?;
        Ok(Self { a, b, theta_star })
    }

    /// The benchmark instance in dimension `p`.
    pub fn benchmark(p: usize) -> Result<Self, RdkwError> {
        if p == 0 {
            return Err(RdkwError::InvalidDimension(
                "objective dimension must be at least 1".into(),
            ));
        }
        Self::new(benchmark_matrix(p), Array1::ones(p))
    }

    pub fn dimension(&self) -> usize {
        self.b.len()
    }

    pub fn theta_star(&self) -> ArrayView1<'_, f64> {
        self.theta_star.view()
    }

    /// `theta^T A theta + b^T theta`.
    pub fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64, RdkwError> {
        check_dimension(self.dimension(), theta.len())?;
        let a_theta = self.a.dot(&theta);
        Ok(theta.dot(&a_theta) + self.b.dot(&theta))
    }

    /// `(A + A^T) theta + b`.
    pub fn gradient(&self, theta: ArrayView1<'_, f64>) -> Result<Array1<f64>, RdkwError> {
        check_dimension(self.dimension(), theta.len())?;
        Ok(self.a.dot(&theta) + self.a.t().dot(&theta) + &self.b)
    }
}

impl FourthOrderSpec {
    pub fn new(a: Array2<f64>) -> Result<Self, RdkwError> {
        let (rows, cols) = a.dim();
        if rows == 0 || rows != cols {
            return Err(RdkwError::DimensionMismatch(format!(
                "need square A, got {rows}x{cols}"
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(RdkwError::InvalidConfig(
                "loss coefficients must be finite".into(),
            ));
        }
        let theta_star = Array1::zeros(rows);
        Ok(Self { a, theta_star })
    }

    /// The benchmark instance in dimension `p`.
    pub fn benchmark(p: usize) -> Result<Self, RdkwError> {
        if p == 0 {
            return Err(RdkwError::InvalidDimension(
                "objective dimension must be at least 1".into(),
            ));
        }
        Self::new(benchmark_matrix(p))
    }

    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    /// The origin: every term of the loss vanishes there and the gradient
    /// is zero, while the loss is nonnegative near it.
    pub fn theta_star(&self) -> ArrayView1<'_, f64> {
        self.theta_star.view()
    }

    /// `||A theta||^2 + 0.1 sum (A theta)^3 + 0.01 sum (A theta)^4`.
    pub fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64, RdkwError> {
        check_dimension(self.dimension(), theta.len())?;
        let y = self.a.dot(&theta);
        let square = y.dot(&y);
        let cube: f64 = y.iter().map(|v| v * v * v).sum();
        let quart: f64 = y.iter().map(|v| v * v * v * v).sum();
        Ok(square + 0.1 * cube + 0.01 * quart)
    }

    /// `2 A^T A theta + 0.3 A^T (A theta)^2 + 0.04 A^T (A theta)^3`,
    /// powers taken componentwise.
    pub fn gradient(&self, theta: ArrayView1<'_, f64>) -> Result<Array1<f64>, RdkwError> {
        check_dimension(self.dimension(), theta.len())?;
        let y = self.a.dot(&theta);
        let y2 = y.mapv(|v| v * v);
        let y3 = y.mapv(|v| v * v * v);
        Ok(self.a.t().dot(&y) * 2.0 + self.a.t().dot(&y2) * 0.3 + self.a.t().dot(&y3) * 0.04)
    }
}

impl Loss {
    pub fn dimension(&self) -> usize {
        match self {
            Loss::Quadratic(spec) => spec.dimension(),
            Loss::FourthOrder(spec) => spec.dimension(),
            Loss::Custom { dimension, .. } => *dimension,
        }
    }

    pub fn value(&self, theta: ArrayView1<'_, f64>) -> Result<f64, RdkwError> {
        match self {
            Loss::Quadratic(spec) => spec.value(theta),
            Loss::FourthOrder(spec) => spec.value(theta),
            Loss::Custom {
                dimension, value, ..
            } => {
                check_dimension(*dimension, theta.len())?;
                Ok(value(theta))
            }
        }
    }

    /// Known minimizer, if any; custom losses may not declare one.
    pub fn theta_star(&self) -> Option<ArrayView1<'_, f64>> {
        match self {
            Loss::Quadratic(spec) => Some(spec.theta_star()),
            Loss::FourthOrder(spec) => Some(spec.theta_star()),
            Loss::Custom { theta_star, .. } => theta_star.as_ref().map(|t| t.view()),
        }
    }
}

impl NoisyObjective {
    /// Wraps a loss with noise level `sigma >= 0` and a seeded generator.
    pub fn new(loss: Loss, sigma: f64, seed: u64) -> Result<Self, RdkwError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(RdkwError::InvalidConfig(format!(
                "noise level sigma must be a non-negative finite number, got {sigma}"
            )));
        }
        Ok(Self {
            loss,
            sigma,
            rng: ChaCha8Rng::seed_from_u64(seed),
            evaluations: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.loss.dimension()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta_star(&self) -> Option<ArrayView1<'_, f64>> {
        self.loss.theta_star()
    }

    /// Measurements consumed so far; increments by exactly 1 per call.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// One noisy measurement `J(theta) + [theta^T, 1] z` with a fresh
    /// `z ~ N(0, sigma^2 I_{p+1})`. With `sigma = 0` the generator is left
    /// untouched and the exact loss is returned.
    pub fn evaluate(&mut self, theta: ArrayView1<'_, f64>) -> Result<f64, RdkwError> {
        let clean = self.loss.value(theta)?;
        self.evaluations += 1;
        if self.sigma == 0.0 {
            return Ok(clean);
        }
        let mut noise = 0.0;
        for i in 0..theta.len() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            noise += theta[i] * self.sigma * z;
        }
        let z_const: f64 = StandardNormal.sample(&mut self.rng);
        noise += self.sigma * z_const;
        Ok(clean + noise)
    }
}

/// Normalized mean square error `||theta_end - theta*||^2 / ||theta0 - theta*||^2`.
pub fn nmse(
    theta_end: ArrayView1<'_, f64>,
    theta0: ArrayView1<'_, f64>,
    theta_star: ArrayView1<'_, f64>,
) -> Result<f64, RdkwError> {
    if theta_end.len() != theta_star.len() || theta0.len() != theta_star.len() {
        return Err(RdkwError::DimensionMismatch(format!(
            "nmse needs equal lengths, got end {}, start {}, optimum {}",
            theta_end.len(),
            theta0.len(),
            theta_star.len()
        )));
    }
    let denom: f64 = theta0
        .iter()
        .zip(theta_star.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if denom == 0.0 {
        return Err(RdkwError::UndefinedMetric);
    }
    let num: f64 = theta_end
        .iter()
        .zip(theta_star.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / denom)
}
