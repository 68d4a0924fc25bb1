//! Perturbation direction sequences.
//!
//! Random-direction gradient estimation needs direction vectors `d` whose
//! first two moments look like those of an isotropic random draw: the mean
//! must vanish and the second moment must be the identity. For a finite
//! deterministic sequence `d_1, ..., d_P` cycled periodically, those
//! requirements become the two cycle properties
//!
//! * **P1** (second moment): `sum_n d_n d_n^T = P * I`, and
//! * **P2** (zero sum): `sum_n d_n = 0`,
//!
//! where `P` is the cycle length. This module builds the two deterministic
//! constructions that satisfy both properties — the minimal-cycle circulant
//! construction with `P = p + 1` and the Sylvester-Hadamard construction with
//! `P` the smallest power of two at least `p + 1` — plus the random
//! symmetric-Bernoulli generator that satisfies them in expectation.
//!
//! ```
//! use rdkw::perturb::{build_circulant_cycle, verify_cycle, CirculantSpec};
//!
//! let mut cycle = build_circulant_cycle(&CirculantSpec { dimension: 10 }).unwrap();
//! assert_eq!(cycle.cycle_length(), 11);
//! let report = verify_cycle(&cycle);
//! assert!(report.p1_residual < 1e-10 && report.p2_residual < 1e-10);
//! let d = cycle.next_direction();
//! assert_eq!(d.len(), 10);
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::RdkwError;

/// A finite sequence of perturbation directions, cycled periodically.
///
/// Columns of the stored matrix are the directions `d_1, ..., d_P`; the cursor
/// tracks the next column to hand out. Construction and verification are
/// pure; only [`next_direction`](Self::next_direction) mutates.
#[derive(Debug, Clone)]
pub struct PerturbationCycle {
    /// p x P matrix; column n is direction d_n.
    columns: Array2<f64>,
    /// Next column to return, always in `0..cycle_length`.
    cursor: usize,
}

/// Parameters of the circulant construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CirculantSpec {
    /// Problem dimension p.
    pub dimension: usize,
}

/// Seeded generator of random symmetric-Bernoulli directions.
///
/// Every component of every emitted vector is exactly +1 or -1 with equal
/// probability; the stream is a deterministic function of the seed.
#[derive(Debug, Clone)]
pub struct BernoulliGenerator {
    dimension: usize,
    rng: ChaCha8Rng,
}

/// Residuals of the cycle properties, as measured on a concrete cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleReport {
    /// Max entrywise deviation of `sum_n d_n d_n^T` from `P * I` (property P1).
    pub p1_residual: f64,
    /// Max entrywise magnitude of `sum_n d_n` (property P2).
    pub p2_residual: f64,
    /// Largest Euclidean column norm, `max_n ||d_n||`.
    pub max_col_norm: f64,
}

/// Closed-form negative square root of `C = I + uu^T` with `u` all ones:
/// `C^{-1/2} = I - uu^T/p + uu^T/(p * sqrt(1 + p))`.
///
/// Costs O(p^2) writes; no general matrix-root routine is involved.
pub fn circulant_inverse_sqrt(p: usize) -> Result<Array2<f64>, RdkwError> {
    if p == 0 {
        return Err(RdkwError::InvalidDimension(
            "perturbation dimension must be at least 1".into(),
        ));
    }
    let pf = p as f64;
    let off = -1.0 / pf + 1.0 / (pf * (1.0 + pf).sqrt());
    let mut m = Array2::from_elem((p, p), off);
    for i in 0..p {
        m[[i, i]] += 1.0;
    }
    Ok(m)
}

/// Builds the minimal-length deterministic cycle, `P = p + 1`.
///
/// The directions are the columns of `sqrt(p+1) * [C^{-1/2}, -C^{-1/2} u]`.
/// Since `C^{-1/2} u = u / sqrt(p+1)`, the final column simplifies to `-u`
/// and is stored in that exact form.
pub fn build_circulant_cycle(spec: &CirculantSpec) -> Result<PerturbationCycle, RdkwError> {
    let p = spec.dimension;
    let z = circulant_inverse_sqrt(p)?;
    let scale = ((p + 1) as f64).sqrt();
    let mut columns = Array2::zeros((p, p + 1));
    columns.slice_mut(s![.., ..p]).assign(&(scale * &z));
    columns.column_mut(p).fill(-1.0);
    PerturbationCycle::from_columns(columns)
}

/// Builds the Hadamard deterministic cycle.
///
/// `P` is the smallest power of two with `P >= p + 1`. The directions are
/// the columns of rows `2..=p+1` of the P x P Sylvester matrix; the skipped
/// first row is all ones. Entries are exactly +1 or -1, so both cycle
/// properties hold without rounding.
pub fn build_hadamard_cycle(p: usize) -> Result<PerturbationCycle, RdkwError> {
    if p == 0 {
        return Err(RdkwError::InvalidDimension(
            "perturbation dimension must be at least 1".into(),
        ));
    }
    let cycle_len = (p + 1).next_power_of_two();
    let h = sylvester(cycle_len);
    let columns = h.slice(s![1..=p, ..]).to_owned();
    PerturbationCycle::from_columns(columns)
}

/// The P x P Sylvester-Hadamard matrix: `H_1 = [1]`,
/// `H_2k = [[H_k, H_k], [H_k, -H_k]]`. `size` must be a power of two.
fn sylvester(size: usize) -> Array2<f64> {
    debug_assert!(size.is_power_of_two());
    let mut h = Array2::from_elem((1, 1), 1.0);
    let mut k = 1;
    while k < size {
        let mut next = Array2::zeros((2 * k, 2 * k));
        next.slice_mut(s![..k, ..k]).assign(&h);
        next.slice_mut(s![..k, k..]).assign(&h);
        next.slice_mut(s![k.., ..k]).assign(&h);
        next.slice_mut(s![k.., k..]).assign(&(-&h));
        h = next;
        k *= 2;
    }
    h
}

impl PerturbationCycle {
    /// Wraps an explicit direction matrix (one direction per column).
    ///
    /// Shape is validated (`p >= 1`, `P >= p + 1`, finite entries) but the
    /// cycle properties are not; use [`verify_cycle`] for that.
    pub fn from_columns(columns: Array2<f64>) -> Result<Self, RdkwError> {
        let (p, cycle_len) = columns.dim();
        if p == 0 {
            return Err(RdkwError::InvalidDimension(
                "perturbation dimension must be at least 1".into(),
            ));
        }
        if cycle_len < p + 1 {
            return Err(RdkwError::InvalidDimension(format!(
                "cycle length {cycle_len} is below the minimum p + 1 = {}",
                p + 1
            )));
        }
        if columns.iter().any(|x| !x.is_finite()) {
            return Err(RdkwError::InvalidDimension(
                "cycle columns must be finite".into(),
            ));
        }
        Ok(Self { columns, cursor: 0 })
    }

    /// Problem dimension p (rows).
    pub fn dimension(&self) -> usize {
        self.columns.nrows()
    }

    /// Cycle length P (columns).
    pub fn cycle_length(&self) -> usize {
        self.columns.ncols()
    }

    /// Current cursor position in `0..cycle_length`.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Direction `d_n` without advancing.
    pub fn column(&self, n: usize) -> ArrayView1<'_, f64> {
        self.columns.column(n % self.cycle_length())
    }

    /// The full direction matrix.
    pub fn columns(&self) -> &Array2<f64> {
        &self.columns
    }

    /// Returns the column at the cursor and advances it by one, wrapping at
    /// the cycle length. P successive calls return every column exactly once.
    pub fn next_direction(&mut self) -> Array1<f64> {
        let d = self.columns.column(self.cursor).to_owned();
        self.cursor = (self.cursor + 1) % self.cycle_length();
        d
    }

    /// Serializes the cycle as CSV, one direction per line, 17 significant
    /// digits per entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for col in self.columns.axis_iter(Axis(1)) {
            let fields: Vec<String> = col.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

impl BernoulliGenerator {
    /// Creates a generator for dimension `p` seeded deterministically.
    pub fn new(p: usize, seed: u64) -> Result<Self, RdkwError> {
        if p == 0 {
            return Err(RdkwError::InvalidDimension(
                "perturbation dimension must be at least 1".into(),
            ));
        }
        Ok(Self {
            dimension: p,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Problem dimension p.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Draws a fresh direction with independent +/-1 components.
    pub fn next_direction(&mut self) -> Array1<f64> {
        Array1::from_shape_fn(self.dimension, |_| {
            if self.rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        })
    }
}

/// Measures how well a concrete cycle satisfies the two cycle properties.
pub fn verify_cycle(cycle: &PerturbationCycle) -> CycleReport {
    let p = cycle.dimension();
    let cycle_len = cycle.cycle_length() as f64;
    let y = cycle.columns();

    let mut moment = y.dot(&y.t());
    for i in 0..p {
        moment[[i, i]] -= cycle_len;
    }
    let p1_residual = moment.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let col_sum = y.sum_axis(Axis(1));
    let p2_residual = col_sum.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let max_col_norm = y
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0f64, f64::max);

    CycleReport {
        p1_residual,
        p2_residual,
        max_col_norm,
    }
}
