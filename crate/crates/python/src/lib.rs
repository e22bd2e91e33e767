//! Python extension exposing the factorization solver and the lifted
//! verification oracle. Matrices cross the boundary as lists of rows,
//! tensors as `[i][l][j]` nested lists.

use ndarray::{Array2, Array3};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use liftnmf_core::error::Error;
use liftnmf_core::lifted;
use liftnmf_core::lifted::{LiftedQ, Tensor3};
use liftnmf_core::matrix::{DataMatrix, FactorPair};
use liftnmf_core::solver;
use liftnmf_core::solver::{InitStrategy, SolverConfig};

type Matrix = Vec<Vec<f64>>;
type NestedTensor = Vec<Vec<Vec<f64>>>;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Singularity { .. } | Error::DegenerateLatent { .. } | Error::InfiniteDivergence => {
            PyRuntimeError::new_err(err.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix_from_rows(rows: Matrix) -> PyResult<Array2<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((flat.len() / ncols, ncols), flat).expect("rectangular"))
}

fn matrix_to_rows(arr: &Array2<f64>) -> Matrix {
    arr.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn data_matrix(rows: Matrix) -> PyResult<DataMatrix> {
    DataMatrix::new(matrix_from_rows(rows)?).map_err(to_py_err)
}

fn factor_pair(w: Matrix, h: Matrix) -> PyResult<FactorPair> {
    FactorPair::new(matrix_from_rows(w)?, matrix_from_rows(h)?).map_err(to_py_err)
}

fn lifted_q(q_minus: Matrix, q_plus: Matrix) -> PyResult<LiftedQ> {
    LiftedQ::new(matrix_from_rows(q_minus)?, matrix_from_rows(q_plus)?).map_err(to_py_err)
}

fn tensor_from_nested(t: NestedTensor) -> PyResult<Tensor3> {
    let m = t.len();
    if m == 0 || t[0].is_empty() || t[0][0].is_empty() {
        return Err(PyValueError::new_err("tensor must be non-empty"));
    }
    let k = t[0].len();
    let n = t[0][0].len();
    let mut data = Array3::zeros((m, k, n));
    for (i, slab) in t.iter().enumerate() {
        if slab.len() != k {
            return Err(PyValueError::new_err("tensor slabs have unequal sizes"));
        }
        for (l, row) in slab.iter().enumerate() {
            if row.len() != n {
                return Err(PyValueError::new_err("tensor rows have unequal lengths"));
            }
            for (j, &x) in row.iter().enumerate() {
                data[[i, l, j]] = x;
            }
        }
    }
    Tensor3::new(data).map_err(to_py_err)
}

fn tensor_to_nested(t: &Tensor3) -> NestedTensor {
    let (m, k, n) = t.dims();
    (0..m)
        .map(|i| {
            (0..k)
                .map(|l| (0..n).map(|j| t.get(i, l, j)).collect())
                .collect()
        })
        .collect()
}

/// Result of a full solve.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Factorization {
    #[pyo3(get)]
    w: Matrix,
    #[pyo3(get)]
    h: Matrix,
    #[pyo3(get)]
    divergence: f64,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    stop_reason: String,
    /// Per-iteration (divergence, objective, residual) triples.
    #[pyo3(get)]
    trace: Vec<(f64, f64, f64)>,
    /// Per-iteration (gain_p, gain_q) pairs when oracle checking is on.
    #[pyo3(get)]
    gains: Option<Vec<(f64, f64)>>,
}

#[pymethods]
impl Factorization {
    fn __repr__(&self) -> String {
        format!(
            "Factorization(rank={}, divergence={}, iterations={}, stop_reason='{}')",
            self.h.len(),
            self.divergence,
            self.iterations,
            self.stop_reason
        )
    }
}

/// I-divergence D(a ‖ b) between two nonnegative matrices; may be inf.
#[pyfunction]
fn i_divergence(a: Matrix, b: Matrix) -> PyResult<f64> {
    let a = matrix_from_rows(a)?;
    let b = matrix_from_rows(b)?;
    Ok(liftnmf_core::i_divergence(&a, &b)
        .map_err(to_py_err)?
        .value())
}

/// The objective F(W, H) = sum(V log(WH) − WH); −inf on unmatched zeros.
#[pyfunction]
fn objective(v: Matrix, w: Matrix, h: Matrix) -> PyResult<f64> {
    let v = data_matrix(v)?;
    let f = factor_pair(w, h)?;
    liftnmf_core::objective_f(&v, &f).map_err(to_py_err)
}

/// Product WH of a factor pair.
#[pyfunction]
fn wh_product(w: Matrix, h: Matrix) -> PyResult<Matrix> {
    let f = factor_pair(w, h)?;
    Ok(matrix_to_rows(&f.product()))
}

/// One simultaneous multiplicative update; returns (W', H').
#[pyfunction]
fn update_step(
    v: Matrix,
    w: Matrix,
    h: Matrix,
) -> PyResult<(Matrix, Matrix)> {
    let v = data_matrix(v)?;
    let f = factor_pair(w, h)?;
    let next = solver::update_step(&v, &f).map_err(to_py_err)?;
    Ok((matrix_to_rows(next.w()), matrix_to_rows(next.h())))
}

/// Solve min D(V ‖ WH) for the given rank.
#[pyfunction]
#[pyo3(signature = (v, rank, *, max_iters=1000, tol=1e-9, seed=0, restarts=1, min_init=0.1, oracle=false))]
#[allow(clippy::too_many_arguments)]
fn factorize(
    v: Matrix,
    rank: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
    min_init: f64,
    oracle: bool,
) -> PyResult<Factorization> {
    let v = data_matrix(v)?;
    let mut cfg = SolverConfig::new(rank);
    cfg.max_iters = max_iters;
    cfg.rel_tol = tol;
    cfg.seed = seed;
    cfg.restarts = restarts;
    cfg.min_init = min_init;
    cfg.oracle_checks = oracle;
    cfg.init_strategy = InitStrategy::UniformRandom;
    let result = solver::run(&v, &cfg, None).map_err(to_py_err)?;
    let gains = if oracle {
        Some(
            result
                .trace
                .records()
                .iter()
                .filter_map(|r| r.oracle.as_ref().map(|o| (o.gain_p, o.gain_q)))
                .collect(),
        )
    } else {
        None
    };
    Ok(Factorization {
        w: matrix_to_rows(result.factors.w()),
        h: matrix_to_rows(result.factors.h()),
        divergence: result.final_divergence.value(),
        iterations: result.iterations_run,
        stop_reason: format!("{:?}", result.stop_reason),
        trace: result
            .trace
            .records()
            .iter()
            .map(|r| (r.divergence, r.objective, r.residual))
            .collect(),
        gains,
    })
}

/// Rescale (W, H) so H becomes row-stochastic with WH unchanged.
#[pyfunction]
fn normalize_row_stochastic(
    w: Matrix,
    h: Matrix,
) -> PyResult<(Matrix, Matrix)> {
    let f = solver::normalize_row_stochastic(&matrix_from_rows(w)?, &matrix_from_rows(h)?)
        .map_err(to_py_err)?;
    Ok((matrix_to_rows(f.w()), matrix_to_rows(f.h())))
}

/// Sort W columns (and H rows) into the canonical order.
#[pyfunction]
fn canonicalize(w: Matrix, h: Matrix) -> PyResult<(Matrix, Matrix)> {
    let f = factor_pair(w, h)?;
    let c = solver::canonicalize(&f);
    Ok((matrix_to_rows(c.w()), matrix_to_rows(c.h())))
}

/// Max-norm distance of (W, H) from its own multiplicative update.
#[pyfunction]
fn stationarity_residual(v: Matrix, w: Matrix, h: Matrix) -> PyResult<f64> {
    let v = data_matrix(v)?;
    let f = factor_pair(w, h)?;
    solver::stationarity_residual(&v, &f).map_err(to_py_err)
}

/// One lifted cycle: project onto the marginal set, then the product set.
#[pyfunction]
fn lifted_iteration(
    v: Matrix,
    q_minus: Matrix,
    q_plus: Matrix,
) -> PyResult<(Matrix, Matrix)> {
    let p = data_matrix(v)?;
    let q = lifted_q(q_minus, q_plus)?;
    let next = lifted::lifted_iteration(&p, &q).map_err(to_py_err)?;
    Ok((matrix_to_rows(next.q_minus()), matrix_to_rows(next.q_plus())))
}

/// Information projection onto the marginal set of `v`.
#[pyfunction]
fn project_to_p(
    v: Matrix,
    q_minus: Matrix,
    q_plus: Matrix,
) -> PyResult<NestedTensor> {
    let p = data_matrix(v)?;
    let q = lifted_q(q_minus, q_plus)?;
    let t = lifted::project_to_p(&p, &q).map_err(to_py_err)?;
    Ok(tensor_to_nested(&t))
}

/// Information projection onto the product set; returns (Q−, Q+).
#[pyfunction]
fn project_to_q(t: NestedTensor) -> PyResult<(Matrix, Matrix)> {
    let t = tensor_from_nested(t)?;
    let q = lifted::project_to_q(&t).map_err(to_py_err)?;
    Ok((matrix_to_rows(q.q_minus()), matrix_to_rows(q.q_plus())))
}

/// I-divergence between two tensors of equal dimensions.
#[pyfunction]
fn tensor_divergence(a: NestedTensor, b: NestedTensor) -> PyResult<f64> {
    let a = tensor_from_nested(a)?;
    let b = tensor_from_nested(b)?;
    Ok(lifted::tensor_divergence(&a, &b)
        .map_err(to_py_err)?
        .value())
}

/// Collapse the latent axis of a tensor.
#[pyfunction]
fn marginal(t: NestedTensor) -> PyResult<Matrix> {
    let t = tensor_from_nested(t)?;
    let m = lifted::marginal(&t).map_err(to_py_err)?;
    Ok(matrix_to_rows(m.as_array()))
}

/// Pythagorean residual through the product-set projection.
#[pyfunction]
fn pythagorean_q_residual(
    t: NestedTensor,
    q_minus: Matrix,
    q_plus: Matrix,
) -> PyResult<f64> {
    let t = tensor_from_nested(t)?;
    let q = lifted_q(q_minus, q_plus)?;
    lifted::pythagorean_q_residual(&t, &q).map_err(to_py_err)
}

/// Pythagorean residual through the marginal-set projection.
#[pyfunction]
fn pythagorean_p_residual(
    t: NestedTensor,
    v: Matrix,
    q_minus: Matrix,
    q_plus: Matrix,
) -> PyResult<f64> {
    let t = tensor_from_nested(t)?;
    let p = data_matrix(v)?;
    let q = lifted_q(q_minus, q_plus)?;
    lifted::pythagorean_p_residual(&t, &p, &q).map_err(to_py_err)
}

/// Certify whether V = WH exactly; returns (certified, marginal_gap).
#[pyfunction]
fn factorization_witness(
    v: Matrix,
    w: Matrix,
    h: Matrix,
) -> PyResult<(bool, f64)> {
    let v = data_matrix(v)?;
    let f = factor_pair(w, h)?;
    let witness = lifted::factorization_witness(&v, &f).map_err(to_py_err)?;
    Ok((witness.certified, witness.marginal_gap))
}

/// Chain rule for the divergence of two joint laws; returns
/// (joint, conditional, marginal) with joint = conditional + marginal.
#[pyfunction]
fn conditional_divergence_decomposition(
    pj: Matrix,
    qj: Matrix,
) -> PyResult<(f64, f64, f64)> {
    let pj = data_matrix(pj)?;
    let qj = data_matrix(qj)?;
    let d = lifted::conditional_divergence_decomposition(&pj, &qj).map_err(to_py_err)?;
    Ok((d.joint, d.conditional, d.marginal))
}

/// Run the lifted scheme from several seeds; returns
/// (min_lifted, min_matrix, max_agreement_gap) across trials.
#[pyfunction]
fn double_minimization_check(
    v: Matrix,
    rank: usize,
    trials: usize,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let p = data_matrix(v)?;
    let report = lifted::double_minimization_check(&p, rank, trials, seed).map_err(to_py_err)?;
    let max_gap = report
        .runs
        .iter()
        .map(|r| r.agreement_gap)
        .fold(0.0, f64::max);
    Ok((report.min_lifted, report.min_matrix, max_gap))
}

#[pymodule]
fn liftnmf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Factorization>()?;
    m.add_function(wrap_pyfunction!(i_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(wh_product, m)?)?;
    m.add_function(wrap_pyfunction!(update_step, m)?)?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_row_stochastic, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(stationarity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(lifted_iteration, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_p, m)?)?;
    m.add_function(wrap_pyfunction!(project_to_q, m)?)?;
    m.add_function(wrap_pyfunction!(tensor_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(marginal, m)?)?;
    m.add_function(wrap_pyfunction!(pythagorean_q_residual, m)?)?;
    m.add_function(wrap_pyfunction!(pythagorean_p_residual, m)?)?;
    m.add_function(wrap_pyfunction!(factorization_witness, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_divergence_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(double_minimization_check, m)?)?;
    Ok(())
}
