//! Gradient-free stochastic optimization with deterministic perturbation
//! sequences.
//!
//! The method iterates `theta_{n+1} = theta_n - a_n * g_n`, where `g_n`
//! estimates the gradient from one or two noisy objective measurements taken
//! along a perturbation direction `d_n`. Directions may be random
//! (independent +/-1 coordinates) or drawn from a short deterministic cycle
//! whose empirical first and second moments match the random ones exactly:
//! the circulant construction with the minimal cycle length `p + 1`, or
//! rows of a Sylvester-Hadamard matrix with cycle length the next power of
//! two. Deterministic cycles remove the direction-sampling variance that
//! dominates the error of random-direction methods at small budgets.
//!
//! Modules:
//!
//! * [`perturb`]: direction cycles and the random generator, plus property
//!   verification.
//! * [`estimate`]: one- and two-measurement gradient estimates.
//! * [`schedule`]: power-law step-size and sensitivity sequences with
//!   convergence-condition validation.
//! * [`objectives`]: benchmark losses, the additive noise model, NMSE.
//! * [`optimize`]: the budgeted iteration loop.
//! * [`bench`]: replicated experiments over algorithm families, with
//!   aggregation and CSV output.
//! * [`cli`]: the command-line interface.

pub mod bench;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod objectives;
pub mod optimize;
pub mod perturb;
pub mod schedule;

pub use error::RdkwError;
