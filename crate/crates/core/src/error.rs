use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode of the library: construction, numerics, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize, value: f64 },

    #[error("matrix must contain at least one positive entry")]
    AllZero,

    #[error("matrix must have at least one row and one column")]
    Empty,

    #[error("ragged input: row {row} has {found} entries, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("row {row} sums to {sum} instead of 1 (tolerance {tol:e})")]
    NotRowStochastic { row: usize, sum: f64, tol: f64 },

    #[error("row {row} is identically zero")]
    ZeroRow { row: usize },

    /// The model `WH` (or the lifted marginal) vanishes where the data is
    /// positive, so the multiplicative update is undefined there.
    #[error("model vanishes at ({row}, {col}) where the data is positive")]
    Singularity { row: usize, col: usize },

    /// A latent component carries no mass, so its conditional row is 0/0.
    #[error("latent component {index} has zero total mass")]
    DegenerateLatent { index: usize },

    #[error("dense tensor of {size} entries exceeds the cap of {cap}")]
    TensorTooLarge { size: usize, cap: usize },

    #[error("tensor marginal differs from the target matrix by {gap:e}")]
    MarginalMismatch { gap: f64 },

    #[error("distribution sums to {sum}, expected 1 (tolerance {tol:e})")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("divergence is infinite; the requested quantity is undefined")]
    InfiniteDivergence,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("line {line}, field {field}: cannot parse {text:?} as a finite number")]
    NonNumeric {
        line: u64,
        field: usize,
        text: String,
    },
}
