//! The I-divergence and the factorization objective.
//!
//! For nonnegative matrices (or tensors) `M`, `N` of equal shape,
//!
//! ```text
//! D(M ‖ N) = Σ_ij ( M_ij · log(M_ij / N_ij) − M_ij + N_ij )
//! ```
//!
//! with the conventions `0/0 = 0`, `0·log 0 = 0` and `p/0 = ∞` for `p > 0`.
//! `D(M ‖ N) >= 0` with equality iff `M = N`, since `x·log x >= x − 1`.
//!
//! Sums are accumulated in row-major order with Neumaier compensation so
//! that traces are reproducible across runs and identities such as
//! `D(V ‖ WH) + F(W, H) = Σ(V·log V − V)` hold tightly in floating point.

use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, FactorPair};

/// Compensated accumulator (Neumaier's variant of Kahan summation).
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// An extended nonnegative real: a finite divergence or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DivergenceValue(f64);

impl DivergenceValue {
    pub(crate) fn from_raw(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value >= 0.0);
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for DivergenceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<DivergenceValue> for f64 {
    fn from(d: DivergenceValue) -> f64 {
        d.0
    }
}

/// Divergence kernel over paired cells; inputs must already be nonnegative.
///
/// Equal inputs produce exactly zero: every cell term is
/// `m·ln(1) − m + m = 0`. A tiny negative total can only be rounding noise
/// from near-equal arguments and is clamped to zero.
pub(crate) fn divergence_cells<'a, I>(cells: I) -> f64
where
    I: Iterator<Item = (&'a f64, &'a f64)>,
{
    let mut acc = CompensatedSum::default();
    for (&m, &n) in cells {
        if m == 0.0 {
            // 0·log 0 = 0 and 0/0 = 0 leave only the +n term.
            acc.add(n);
        } else if n == 0.0 {
            return f64::INFINITY;
        } else {
            acc.add(m * (m / n).ln() - m + n);
        }
    }
    acc.total().max(0.0)
}

fn check_same_shape(m: &Array2<f64>, n: &Array2<f64>) -> Result<()> {
    if m.dim() != n.dim() {
        return Err(Error::ShapeMismatch {
            expected_rows: m.nrows(),
            expected_cols: m.ncols(),
            found_rows: n.nrows(),
            found_cols: n.ncols(),
        });
    }
    Ok(())
}

fn check_nonnegative(arr: &Array2<f64>) -> Result<()> {
    for ((row, col), &x) in arr.indexed_iter() {
        if !x.is_finite() {
            return Err(Error::NonFiniteEntry {
                row,
                col,
                value: x,
            });
        }
        if x < 0.0 {
            return Err(Error::NegativeEntry {
                row,
                col,
                value: x,
            });
        }
    }
    Ok(())
}

/// `D(M ‖ N)` between two nonnegative matrices of identical shape.
pub fn i_divergence(m: &Array2<f64>, n: &Array2<f64>) -> Result<DivergenceValue> {
    check_same_shape(m, n)?;
    check_nonnegative(m)?;
    check_nonnegative(n)?;
    Ok(DivergenceValue::from_raw(divergence_cells(
        m.iter().zip(n.iter()),
    )))
}

/// `D(V ‖ WH)` for a data matrix against a factor pair.
pub fn model_divergence(v: &DataMatrix, f: &FactorPair) -> Result<DivergenceValue> {
    let wh = f.product();
    check_same_shape(v.as_array(), &wh)?;
    Ok(DivergenceValue::from_raw(divergence_cells(
        v.as_array().iter().zip(wh.iter()),
    )))
}

/// The objective `F(W, H) = Σ_ij ( V_ij · log (WH)_ij − (WH)_ij )`.
///
/// Maximizing `F` is the same problem as minimizing `D(V ‖ WH)`:
/// `D(V ‖ WH) + F(W, H) = Σ_ij (V_ij · log V_ij − V_ij)` exactly.
/// Returns `-∞` when some `V_ij > 0` meets `(WH)_ij = 0`.
pub fn objective_f(v: &DataMatrix, f: &FactorPair) -> Result<f64> {
    let wh = f.product();
    check_same_shape(v.as_array(), &wh)?;
    let mut acc = CompensatedSum::default();
    for (&vij, &whij) in v.as_array().iter().zip(wh.iter()) {
        if vij == 0.0 {
            acc.add(-whij);
        } else if whij == 0.0 {
            return Ok(f64::NEG_INFINITY);
        } else {
            acc.add(vij * whij.ln() - whij);
        }
    }
    Ok(acc.total())
}

/// The constant `Σ_ij (V_ij · log V_ij − V_ij)` linking divergence and
/// objective: `D(V ‖ WH) = entropy_constant(V) − F(W, H)`.
pub fn entropy_constant(v: &DataMatrix) -> f64 {
    let mut acc = CompensatedSum::default();
    for &x in v.as_array().iter() {
        if x > 0.0 {
            acc.add(x * x.ln() - x);
        }
    }
    acc.total()
}
