//! Nonnegative matrix types shared by the solver and the lifted oracle.
//!
//! The arithmetic conventions are enforced at construction: entries are
//! finite nonnegative `f64`, tiny negative round-off from upstream parsing
//! is clamped to zero, and `H` is kept row-stochastic so the scaling
//! freedom between the two factors is pinned down.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Entries in `[-NEGATIVE_ENTRY_TOL, 0)` are clamped to zero at
/// construction; anything more negative is a domain error.
pub const NEGATIVE_ENTRY_TOL: f64 = 1e-14;

/// Row sums of `H` must equal one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Clamp harmless round-off, reject genuine sign errors and non-finite values.
pub(crate) fn sanitize_entries(arr: &mut Array2<f64>) -> Result<()> {
    for ((row, col), x) in arr.indexed_iter_mut() {
        if !x.is_finite() {
            return Err(Error::NonFiniteEntry {
                row,
                col,
                value: *x,
            });
        }
        if *x < 0.0 {
            if *x >= -NEGATIVE_ENTRY_TOL {
                *x = 0.0;
            } else {
                return Err(Error::NegativeEntry {
                    row,
                    col,
                    value: *x,
                });
            }
        }
    }
    Ok(())
}

/// Elementwise nonnegative data matrix with at least one positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    data: Array2<f64>,
}

impl DataMatrix {
    pub fn new(mut data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Empty);
        }
        sanitize_entries(&mut data)?;
        if !data.iter().any(|&x| x > 0.0) {
            return Err(Error::AllZero);
        }
        Ok(Self { data })
    }

    /// Build from row vectors; rows must all have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let arr = rows_to_array(rows)?;
        Self::new(arr)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    /// Total mass of the matrix, the sum of all entries.
    pub fn total_mass(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// A factor pair `(W, H)`: `W` is m-by-k nonnegative, `H` is k-by-n
/// nonnegative with unit row sums, and `1 <= k <= min(m, n)`. The product
/// `WH` is the model matched against a [`DataMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    w: Array2<f64>,
    h: Array2<f64>,
}

impl FactorPair {
    pub fn new(mut w: Array2<f64>, mut h: Array2<f64>) -> Result<Self> {
        let (m, k) = w.dim();
        let (hk, n) = h.dim();
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Empty);
        }
        if hk != k {
            return Err(Error::ShapeMismatch {
                expected_rows: k,
                expected_cols: n,
                found_rows: hk,
                found_cols: n,
            });
        }
        let max_rank = m.min(n);
        if k > max_rank {
            return Err(Error::RankOutOfRange {
                rank: k,
                max: max_rank,
            });
        }
        sanitize_entries(&mut w)?;
        sanitize_entries(&mut h)?;
        for (row, r) in h.rows().into_iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if sum == 0.0 {
                return Err(Error::ZeroRow { row });
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotRowStochastic {
                    row,
                    sum,
                    tol: ROW_SUM_TOL,
                });
            }
        }
        Ok(Self { w, h })
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    /// Shape of the product `WH`.
    pub fn dims(&self) -> (usize, usize) {
        (self.w.nrows(), self.h.ncols())
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.w, self.h)
    }

    /// The model matrix `WH`, with the inner sum accumulated in ascending
    /// latent order. This is the reference summation order: the lifted
    /// marginal reproduces it bit for bit.
    pub fn product(&self) -> Array2<f64> {
        let (m, _) = self.w.dim();
        let (k, n) = self.h.dim();
        Array2::from_shape_fn((m, n), |(i, j)| {
            let mut acc = 0.0;
            for l in 0..k {
                acc += self.w[[i, l]] * self.h[[l, j]];
            }
            acc
        })
    }

    pub fn min_entry(&self) -> f64 {
        let wmin = self.w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hmin = self.h.iter().cloned().fold(f64::INFINITY, f64::min);
        wmin.min(hmin)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.min_entry() > 0.0
    }
}

pub(crate) fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Empty);
    }
    let ncols = rows[0].len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::Ragged {
                row,
                expected: ncols,
                found: r.len(),
            });
        }
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), ncols), flat).expect("rectangular by construction"))
}

/// Largest absolute elementwise difference between two equally shaped arrays.
///
/// Panics if the shapes differ.
pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs())
        .fold(0.0, f64::max)
}
