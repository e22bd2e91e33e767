//! Alternating-minimization solver for `min D(V ‖ WH)`.
//!
//! Each step applies the multiplicative updates
//!
//! ```text
//! W'(i,l) = Σ_j V(i,j) · W(i,l)H(l,j) / (WH)(i,j)
//! H'(l,j) = Σ_i V(i,j) · W(i,l)H(l,j) / (WH)(i,j)   (row-normalized)
//! ```
//!
//! computed simultaneously from the same `(W, H)` — a Jacobi sweep, not
//! Gauss–Seidel. The divergence never increases along the iteration and a
//! stationary point of the objective is exactly a fixed point of the step.
//! Sums below are accumulated in the same element order as the lifted
//! projections in [`crate::lifted`], which keeps the two routes in
//! agreement down to round-off.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{model_divergence, objective_f, DivergenceValue};
use crate::error::{Error, Result};
use crate::lifted::{self, LiftedQ, OracleRecord, Tensor3};
use crate::matrix::{max_abs_diff, DataMatrix, FactorPair};

/// Iteration stops once the elementwise update displacement falls below
/// this; such a point is a fixed point of the step to working precision.
pub const STATIONARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Strictly positive i.i.d. uniform entries, mass-matched to the data.
    UniformRandom,
    /// The caller supplies the starting pair to [`run`].
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative divergence change fell below `rel_tol`.
    TolReached,
    /// Iteration budget exhausted.
    MaxIters,
    /// Update displacement below [`STATIONARY_EPS`].
    Stationary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Inner dimension `k`, `1 <= k <= min(m, n)`.
    pub rank: usize,
    pub max_iters: usize,
    /// Stop when `|D_n − D_{n+1}| <= rel_tol · max(D_n, 1)`.
    pub rel_tol: f64,
    pub seed: u64,
    pub init_strategy: InitStrategy,
    /// Lower bound of the uniform range for random initial entries.
    pub min_init: f64,
    /// Number of independently seeded solves; the best final divergence wins.
    pub restarts: usize,
    /// Record lifted-space gain terms and identity residuals each iteration.
    /// Observers only: the iterates are identical either way.
    pub oracle_checks: bool,
}

impl SolverConfig {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iters: 1000,
            rel_tol: 1e-9,
            seed: 0,
            init_strategy: InitStrategy::UniformRandom,
            min_init: 0.1,
            restarts: 1,
            oracle_checks: false,
        }
    }

    pub fn validate_dims(&self, m: usize, n: usize) -> Result<()> {
        let max_rank = m.min(n);
        if self.rank == 0 || self.rank > max_rank {
            return Err(Error::RankOutOfRange {
                rank: self.rank,
                max: max_rank,
            });
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !self.rel_tol.is_finite() || self.rel_tol < 0.0 {
            return Err(Error::InvalidConfig(
                "rel_tol must be finite and nonnegative".into(),
            ));
        }
        if !(self.min_init > 0.0 && self.min_init < 1.0) {
            return Err(Error::InvalidConfig("min_init must lie in (0, 1)".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// One post-step measurement; field meanings follow the iterate just
/// produced.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// `D(V ‖ W_n H_n)`.
    pub divergence: f64,
    /// `F(W_n, H_n)`.
    pub objective: f64,
    /// Max-norm displacement of the step that produced this iterate; equals
    /// the stationarity residual of the previous iterate.
    pub residual: f64,
    pub elapsed_secs: f64,
    pub oracle: Option<OracleRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    records: Vec<IterationRecord>,
}

impl ConvergenceTrace {
    fn push(&mut self, record: IterationRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// Divergence nonincreasing along the trace, within `slack`.
    pub fn divergence_is_monotone(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].divergence <= w[0].divergence + slack)
    }

    /// Objective nondecreasing along the trace, within `slack`.
    pub fn objective_is_monotone(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].objective >= w[0].objective - slack)
    }
}

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    pub factors: FactorPair,
    pub trace: ConvergenceTrace,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub final_divergence: DivergenceValue,
}

/// Strictly positive random starting pair, deterministic in `cfg.seed`.
///
/// `W` is uniform on `[min_init, 1]`, then each column is rescaled so its
/// sum is `Σ V / k` when the data is supplied — a gross scale mismatch at
/// the start only wastes iterations. `H` rows are normalized to sum one.
pub fn init_factors(
    m: usize,
    n: usize,
    cfg: &SolverConfig,
    data: Option<&DataMatrix>,
) -> Result<FactorPair> {
    cfg.validate_dims(m, n)?;
    if cfg.init_strategy == InitStrategy::Provided {
        return Err(Error::InvalidConfig(
            "init strategy `provided` requires an explicit initial pair".into(),
        ));
    }
    let k = cfg.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = Array2::zeros((m, k));
    for i in 0..m {
        for l in 0..k {
            w[[i, l]] = rng.random_range(cfg.min_init..=1.0);
        }
    }
    let mut h = Array2::zeros((k, n));
    for l in 0..k {
        for j in 0..n {
            h[[l, j]] = rng.random_range(cfg.min_init..=1.0);
        }
        let row_sum: f64 = (0..n).map(|j| h[[l, j]]).sum();
        for j in 0..n {
            h[[l, j]] /= row_sum;
        }
    }
    if let Some(v) = data {
        let target = v.total_mass() / k as f64;
        for l in 0..k {
            let col_sum: f64 = (0..m).map(|i| w[[i, l]]).sum();
            let scale = target / col_sum;
            for i in 0..m {
                w[[i, l]] *= scale;
            }
        }
    }
    FactorPair::new(w, h)
}

/// One simultaneous multiplicative update of both factors.
///
/// Requires `(WH)(i,j) > 0` wherever `V(i,j) > 0`; the offending cell is
/// named otherwise. `W'` is bounded by the data's row sums
/// (`W'(i,l) <= Σ_j V(i,j)`) and `H'` rows sum to one by construction.
pub fn update_step(v: &DataMatrix, f: &FactorPair) -> Result<FactorPair> {
    let (m, n) = v.dims();
    if f.dims() != (m, n) {
        return Err(Error::ShapeMismatch {
            expected_rows: m,
            expected_cols: n,
            found_rows: f.dims().0,
            found_cols: f.dims().1,
        });
    }
    let k = f.rank();
    let w = f.w();
    let h = f.h();
    let wh = f.product();
    let va = v.as_array();

    let mut ratio = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let vij = va[[i, j]];
            if vij == 0.0 {
                continue;
            }
            if wh[[i, j]] == 0.0 {
                return Err(Error::Singularity { row: i, col: j });
            }
            ratio[[i, j]] = vij / wh[[i, j]];
        }
    }

    // Same element expression and accumulation order as projecting onto the
    // marginal set and back onto the product set in `lifted`.
    let cell = |i: usize, l: usize, j: usize| w[[i, l]] * h[[l, j]] * ratio[[i, j]];

    let mut w_next = Array2::zeros((m, k));
    for i in 0..m {
        for l in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                acc += cell(i, l, j);
            }
            w_next[[i, l]] = acc;
        }
    }

    let mut h_next = Array2::zeros((k, n));
    for l in 0..k {
        let mut den = 0.0;
        for i in 0..m {
            for j in 0..n {
                den += cell(i, l, j);
            }
        }
        if den == 0.0 {
            return Err(Error::DegenerateLatent { index: l });
        }
        for j in 0..n {
            let mut num = 0.0;
            for i in 0..m {
                num += cell(i, l, j);
            }
            h_next[[l, j]] = num / den;
        }
    }

    FactorPair::new(w_next, h_next)
}

fn displacement(a: &FactorPair, b: &FactorPair) -> f64 {
    max_abs_diff(a.w(), b.w()).max(max_abs_diff(a.h(), b.h()))
}

/// Max-norm distance of `(W, H)` from its own update; zero exactly at the
/// fixed points, which are the stationary points of the objective.
pub fn stationarity_residual(v: &DataMatrix, f: &FactorPair) -> Result<f64> {
    let next = update_step(v, f)?;
    Ok(displacement(f, &next))
}

/// Rescale `(W, H)` so `H` becomes row-stochastic while `WH` is unchanged:
/// with `s_l = Σ_j H(l,j)`, column `l` of `W` is multiplied by `s_l` and row
/// `l` of `H` divided by it.
pub fn normalize_row_stochastic(w: &Array2<f64>, h: &Array2<f64>) -> Result<FactorPair> {
    if w.ncols() != h.nrows() {
        return Err(Error::ShapeMismatch {
            expected_rows: w.ncols(),
            expected_cols: h.ncols(),
            found_rows: h.nrows(),
            found_cols: h.ncols(),
        });
    }
    let mut w2 = w.clone();
    let mut h2 = h.clone();
    crate::matrix::sanitize_entries(&mut w2)?;
    crate::matrix::sanitize_entries(&mut h2)?;
    for l in 0..h2.nrows() {
        let s: f64 = h2.row(l).iter().sum();
        if s == 0.0 {
            return Err(Error::ZeroRow { row: l });
        }
        for j in 0..h2.ncols() {
            h2[[l, j]] /= s;
        }
        for i in 0..w2.nrows() {
            w2[[i, l]] *= s;
        }
    }
    FactorPair::new(w2, h2)
}

/// Fix the column-permutation freedom: order columns of `W` (and the
/// matching rows of `H`) by descending column sum, ties broken by
/// lexicographic comparison of the `W` column. Pure reindexing, so the
/// product is preserved up to summation order.
pub fn canonicalize(f: &FactorPair) -> FactorPair {
    let m = f.w().nrows();
    let k = f.rank();
    let n = f.h().ncols();
    let w = f.w();
    let h = f.h();
    let col_sums: Vec<f64> = (0..k).map(|l| (0..m).map(|i| w[[i, l]]).sum()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        col_sums[b]
            .partial_cmp(&col_sums[a])
            .expect("column sums are finite")
            .then_with(|| {
                for i in 0..m {
                    match w[[i, a]].partial_cmp(&w[[i, b]]).expect("entries are finite") {
                        std::cmp::Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                std::cmp::Ordering::Equal
            })
    });
    let w2 = Array2::from_shape_fn((m, k), |(i, c)| w[[i, order[c]]]);
    let h2 = Array2::from_shape_fn((k, n), |(r, j)| h[[order[r], j]]);
    FactorPair::new(w2, h2).expect("permutation preserves factor invariants")
}

/// Solve `min D(V ‖ WH)` with `cfg.restarts` independently seeded starts,
/// returning the best final divergence. Deterministic in `cfg.seed`.
pub fn run(
    v: &DataMatrix,
    cfg: &SolverConfig,
    initial: Option<FactorPair>,
) -> Result<FactorizationResult> {
    run_with_threads(v, cfg, initial, 1)
}

/// [`run`] with restarts dispatched over `threads` worker threads. Each
/// restart is sequential and pure, and results are merged in restart order,
/// so the outcome is identical for every thread count.
pub fn run_with_threads(
    v: &DataMatrix,
    cfg: &SolverConfig,
    initial: Option<FactorPair>,
    threads: usize,
) -> Result<FactorizationResult> {
    let (m, n) = v.dims();
    cfg.validate_dims(m, n)?;
    if threads == 0 {
        return Err(Error::InvalidConfig("thread count must be at least 1".into()));
    }
    if let Some(init) = &initial {
        if init.dims() != (m, n) {
            return Err(Error::ShapeMismatch {
                expected_rows: m,
                expected_cols: n,
                found_rows: init.dims().0,
                found_cols: init.dims().1,
            });
        }
        if init.rank() != cfg.rank {
            return Err(Error::InvalidConfig(format!(
                "initial pair has rank {}, config says {}",
                init.rank(),
                cfg.rank
            )));
        }
        if !init.is_strictly_positive() {
            return Err(Error::InvalidConfig(
                "initial factors must be strictly positive".into(),
            ));
        }
    } else if cfg.init_strategy == InitStrategy::Provided {
        return Err(Error::InvalidConfig(
            "init strategy `provided` requires an initial factor pair".into(),
        ));
    }

    let mut starts = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        if r == 0 {
            if let Some(init) = initial.clone() {
                starts.push(init);
                continue;
            }
        }
        let mut restart_cfg = cfg.clone();
        restart_cfg.seed = cfg.seed.wrapping_add(r as u64);
        restart_cfg.init_strategy = InitStrategy::UniformRandom;
        starts.push(init_factors(m, n, &restart_cfg, Some(v))?);
    }

    let results: Vec<Result<FactorizationResult>> = if threads <= 1 || starts.len() == 1 {
        starts
            .into_iter()
            .map(|start| solve_single(v, cfg, start))
            .collect()
    } else {
        solve_parallel(v, cfg, starts, threads)
    };

    // merge in restart order; strictly smaller divergence wins
    let mut best: Option<FactorizationResult> = None;
    for result in results {
        let result = result?;
        let better = match &best {
            None => true,
            Some(b) => result.final_divergence.value() < b.final_divergence.value(),
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn solve_parallel(
    v: &DataMatrix,
    cfg: &SolverConfig,
    starts: Vec<FactorPair>,
    threads: usize,
) -> Vec<Result<FactorizationResult>> {
    let count = starts.len();
    let workers = threads.min(count);
    let mut slots: Vec<Option<Result<FactorizationResult>>> = Vec::new();
    slots.resize_with(count, || None);

    let mut bins: Vec<Vec<(usize, FactorPair)>> = (0..workers).map(|_| Vec::new()).collect();
    for (idx, start) in starts.into_iter().enumerate() {
        bins[idx % workers].push((idx, start));
    }

    std::thread::scope(|scope| {
        let handles: Vec<_> = bins
            .into_iter()
            .map(|bin| {
                scope.spawn(move || {
                    bin.into_iter()
                        .map(|(idx, start)| (idx, solve_single(v, cfg, start)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (idx, result) in handle.join().expect("restart worker panicked") {
                slots[idx] = Some(result);
            }
        }
    });

    slots.into_iter().map(|s| s.expect("slot filled")).collect()
}

fn solve_single(
    v: &DataMatrix,
    cfg: &SolverConfig,
    start: FactorPair,
) -> Result<FactorizationResult> {
    let mut current = start;
    let mut d_current = model_divergence(v, &current)?.value();
    let mut t_prev: Option<Tensor3> = if cfg.oracle_checks {
        Some(lifted::project_to_p(
            v,
            &LiftedQ::from_factors(&current),
        )?)
    } else {
        None
    };

    let mut trace = ConvergenceTrace::default();
    let mut stop_reason = StopReason::MaxIters;

    for _ in 0..cfg.max_iters {
        let t0 = Instant::now();
        let next = update_step(v, &current)?;
        let residual = displacement(&current, &next);
        let d_prev = d_current;
        let d_next = model_divergence(v, &next)?.value();

        let oracle = match t_prev.take() {
            Some(tp) => {
                let (record, t_next) =
                    lifted::oracle_step(v, &current, &next, &tp, d_prev, d_next)?;
                t_prev = Some(t_next);
                Some(record)
            }
            None => None,
        };

        let objective = objective_f(v, &next)?;
        trace.push(IterationRecord {
            divergence: d_next,
            objective,
            residual,
            elapsed_secs: t0.elapsed().as_secs_f64(),
            oracle,
        });

        current = next;
        d_current = d_next;

        if residual < STATIONARY_EPS {
            stop_reason = StopReason::Stationary;
            break;
        }
        if (d_prev - d_next).abs() <= cfg.rel_tol * d_prev.max(1.0) {
            stop_reason = StopReason::TolReached;
            break;
        }
    }

    let iterations_run = trace.len();
    Ok(FactorizationResult {
        factors: current,
        trace,
        iterations_run,
        stop_reason,
        final_divergence: DivergenceValue::from_raw(d_current),
    })
}
