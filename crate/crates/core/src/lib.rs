//! Approximate nonnegative matrix factorization under the I-divergence.
//!
//! Given an elementwise nonnegative `V`, find nonnegative `W` (m×k) and
//! row-stochastic `H` (k×n) minimizing the generalized Kullback–Leibler
//! divergence `D(V ‖ WH)`. The solver iterates simultaneous multiplicative
//! updates; the same iteration arises as alternating information
//! projections between two sets of three-index tensors, and the [`lifted`]
//! module materializes that formulation as a built-in verification oracle
//! (projection closed forms, Pythagorean identities, per-step gain terms,
//! exact-factorization witnesses).
//!
//! Entry points: [`solver::run`] for a full solve, [`solver::update_step`]
//! for a single sweep, [`io`] for CSV matrices and run artifacts.

pub mod divergence;
pub mod error;
pub mod io;
pub mod lifted;
pub mod matrix;
pub mod solver;

pub use divergence::{
    entropy_constant, i_divergence, model_divergence, objective_f, DivergenceValue,
};
pub use error::{Error, Result};
pub use matrix::{max_abs_diff, DataMatrix, FactorPair};
pub use solver::{
    canonicalize, init_factors, normalize_row_stochastic, run, run_with_threads,
    stationarity_residual, update_step, ConvergenceTrace, FactorizationResult, InitStrategy,
    IterationRecord, SolverConfig, StopReason,
};
