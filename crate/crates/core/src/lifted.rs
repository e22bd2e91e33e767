//! The lifted three-index formulation used as a verification oracle.
//!
//! A data matrix `P` (m×n) lifts to two sets of nonnegative m×k×n tensors:
//!
//! * the marginal set: tensors `T` with `Σ_l T(i,l,j) = P(i,j)`;
//! * the product set: tensors of the form `Q(i,l,j) = Q₋(i,l)·Q₊(l,j)`
//!   with `Q₊` row-stochastic (see [`LiftedQ`]).
//!
//! `P = Q₋Q₊` exactly iff the two sets intersect, and minimizing
//! `D(P ‖ Q₋Q₊)` equals the double minimization of the tensor divergence
//! over both sets. Each partial minimization is a closed-form information
//! projection ([`project_to_p`], [`project_to_q`]) obeying a Pythagorean
//! identity, and their composition reproduces one multiplicative update of
//! `(W, H)` — which is what makes this module a useful independent check
//! on the matrix-level solver.
//!
//! Tensors here are dense and guarded by [`DEFAULT_TENSOR_CAP`]; the
//! production solver never materializes them.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::divergence::{divergence_cells, i_divergence, DivergenceValue};
use crate::error::{Error, Result};
use crate::matrix::{max_abs_diff, DataMatrix, FactorPair, ROW_SUM_TOL};

/// Dense-tensor size guard: `m·k·n` may not exceed this.
pub const DEFAULT_TENSOR_CAP: usize = 1_000_000;

/// Scale factor for exactness certification in [`factorization_witness`].
pub const WITNESS_TOL: f64 = 1e-10;

/// Tolerance for the marginal-set membership precondition of
/// [`pythagorean_p_residual`].
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Joint distributions must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Size guard for [`double_minimization_check`], which runs many lifted
/// iterations per trial.
pub const DOUBLE_MIN_CAP: usize = 512;

// Tensor error coordinates are reported as (i, j); the latent index is
// folded away rather than growing the error type.
fn sanitize3(arr: &mut Array3<f64>) -> Result<()> {
    for ((i, _, j), x) in arr.indexed_iter_mut() {
        if !x.is_finite() {
            return Err(Error::NonFiniteEntry {
                row: i,
                col: j,
                value: *x,
            });
        }
        if *x < 0.0 {
            if *x >= -crate::matrix::NEGATIVE_ENTRY_TOL {
                *x = 0.0;
            } else {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: *x,
                });
            }
        }
    }
    Ok(())
}

/// Nonnegative m×k×n tensor, indexed `(i, l, j)` with `l` the latent axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Array3<f64>,
}

impl Tensor3 {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        Self::with_cap(data, DEFAULT_TENSOR_CAP)
    }

    pub fn with_cap(mut data: Array3<f64>, cap: usize) -> Result<Self> {
        let (m, k, n) = data.dim();
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Empty);
        }
        let size = m * k * n;
        if size > cap {
            return Err(Error::TensorTooLarge { size, cap });
        }
        sanitize3(&mut data)?;
        Ok(Self { data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, i: usize, l: usize, j: usize) -> f64 {
        self.data[[i, l, j]]
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.data
    }
}

/// Raw marginal `M(i,j) = Σ_l T(i,l,j)`, accumulated in ascending latent
/// order — the same order as [`FactorPair::product`].
pub(crate) fn marginal_array(t: &Tensor3) -> Array2<f64> {
    let (m, k, n) = t.dims();
    let a = t.as_array();
    Array2::from_shape_fn((m, n), |(i, j)| {
        let mut acc = 0.0;
        for l in 0..k {
            acc += a[[i, l, j]];
        }
        acc
    })
}

/// Collapse the latent axis: `M(i,j) = Σ_l T(i,l,j)`.
pub fn marginal(t: &Tensor3) -> Result<DataMatrix> {
    DataMatrix::new(marginal_array(t))
}

/// A product-form tensor, stored by its two factors: `Q₋` (m×k, nonnegative)
/// and `Q₊` (k×n, nonnegative, row-stochastic). The induced tensor is
/// `Q(i,l,j) = Q₋(i,l)·Q₊(l,j)`; its marginal is the matrix product `Q₋Q₊`.
///
/// Unlike [`FactorPair`] the latent dimension is unconstrained, so lifted
/// instances with `k > min(m, n)` are representable.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedQ {
    q_minus: Array2<f64>,
    q_plus: Array2<f64>,
}

impl LiftedQ {
    pub fn new(q_minus: Array2<f64>, q_plus: Array2<f64>) -> Result<Self> {
        let (m, k) = q_minus.dim();
        let (pk, n) = q_plus.dim();
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Empty);
        }
        if pk != k {
            return Err(Error::ShapeMismatch {
                expected_rows: k,
                expected_cols: n,
                found_rows: pk,
                found_cols: n,
            });
        }
        let mut q_minus = q_minus;
        let mut q_plus = q_plus;
        crate::matrix::sanitize_entries(&mut q_minus)?;
        crate::matrix::sanitize_entries(&mut q_plus)?;
        for (row, r) in q_plus.rows().into_iter().enumerate() {
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
        Ok(Self { q_minus, q_plus })
    }

    pub fn from_factors(f: &FactorPair) -> Self {
        Self {
            q_minus: f.w().clone(),
            q_plus: f.h().clone(),
        }
    }

    /// Reinterpret as a factor pair; fails if `k > min(m, n)`.
    pub fn into_factors(self) -> Result<FactorPair> {
        FactorPair::new(self.q_minus, self.q_plus)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let (m, k) = self.q_minus.dim();
        (m, k, self.q_plus.ncols())
    }

    pub fn q_minus(&self) -> &Array2<f64> {
        &self.q_minus
    }

    pub fn q_plus(&self) -> &Array2<f64> {
        &self.q_plus
    }

    /// Materialize the induced tensor `Q(i,l,j) = Q₋(i,l)·Q₊(l,j)`.
    pub fn tensor(&self) -> Result<Tensor3> {
        let (m, k, n) = self.dims();
        let data = Array3::from_shape_fn((m, k, n), |(i, l, j)| {
            self.q_minus[[i, l]] * self.q_plus[[l, j]]
        });
        Tensor3::new(data)
    }

    /// The marginal `Q(i,j) = Σ_l Q₋(i,l)·Q₊(l,j)`, i.e. the matrix product.
    pub fn marginal_matrix(&self) -> Array2<f64> {
        let (m, k, n) = self.dims();
        Array2::from_shape_fn((m, n), |(i, j)| {
            let mut acc = 0.0;
            for l in 0..k {
                acc += self.q_minus[[i, l]] * self.q_plus[[l, j]];
            }
            acc
        })
    }
}

/// Elementwise I-divergence between two tensors of equal dimensions.
pub fn tensor_divergence(a: &Tensor3, b: &Tensor3) -> Result<DivergenceValue> {
    if a.dims() != b.dims() {
        let (m, k, n) = a.dims();
        let (bm, bk, bn) = b.dims();
        return Err(Error::ShapeMismatch {
            expected_rows: m,
            expected_cols: k * n,
            found_rows: bm,
            found_cols: bk * bn,
        });
    }
    Ok(DivergenceValue::from_raw(divergence_cells(
        a.as_array().iter().zip(b.as_array().iter()),
    )))
}

/// Information projection onto the marginal set: the divergence minimizer
/// `T*` over tensors with marginal `P`, for fixed `Q`. Closed form:
/// `T*(i,l,j) = Q(i,l,j) · P(i,j) / Q(i,j)`.
///
/// Cells with `P(i,j) = 0` are zero; `P(i,j) > 0` against `Q(i,j) = 0` is a
/// singularity. The marginal of the result reproduces `P` up to round-off,
/// and `D(T* ‖ Q) = D(P ‖ Q₋Q₊)`.
pub fn project_to_p(p: &DataMatrix, q: &LiftedQ) -> Result<Tensor3> {
    let (m, k, n) = q.dims();
    if p.dims() != (m, n) {
        return Err(Error::ShapeMismatch {
            expected_rows: m,
            expected_cols: n,
            found_rows: p.rows(),
            found_cols: p.cols(),
        });
    }
    let qm = q.marginal_matrix();
    let mut ratio = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let pij = p.get(i, j);
            if pij == 0.0 {
                continue;
            }
            if qm[[i, j]] == 0.0 {
                return Err(Error::Singularity { row: i, col: j });
            }
            ratio[[i, j]] = pij / qm[[i, j]];
        }
    }
    let data = Array3::from_shape_fn((m, k, n), |(i, l, j)| {
        q.q_minus()[[i, l]] * q.q_plus()[[l, j]] * ratio[[i, j]]
    });
    Tensor3::new(data)
}

/// Information projection onto the product set: the divergence minimizer
/// over product-form tensors, for a fixed tensor `T`. Closed form:
/// `Q₋*(i,l) = Σ_j T(i,l,j)` and `Q₊*(l,j) = Σ_i T(i,l,j) / Σ_ij T(i,l,j)`.
///
/// A latent slab with zero total mass makes the `Q₊` row 0/0; that is
/// reported as [`Error::DegenerateLatent`] rather than silently patched,
/// so the caller can drop the dead component.
pub fn project_to_q(t: &Tensor3) -> Result<LiftedQ> {
    let (m, k, n) = t.dims();
    let a = t.as_array();
    let mut q_minus = Array2::zeros((m, k));
    for i in 0..m {
        for l in 0..k {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[[i, l, j]];
            }
            q_minus[[i, l]] = acc;
        }
    }
    let mut q_plus = Array2::zeros((k, n));
    for l in 0..k {
        let mut den = 0.0;
        for i in 0..m {
            for j in 0..n {
                den += a[[i, l, j]];
            }
        }
        if den == 0.0 {
            return Err(Error::DegenerateLatent { index: l });
        }
        for j in 0..n {
            let mut num = 0.0;
            for i in 0..m {
                num += a[[i, l, j]];
            }
            q_plus[[l, j]] = num / den;
        }
    }
    LiftedQ::new(q_minus, q_plus)
}

/// Residual of the Pythagorean identity through the product-set projection:
/// `D(T ‖ Q) − D(T ‖ Q*) − D(Q* ‖ Q)` with `Q* = project_to_q(T)`.
/// Vanishes identically; the computed value is pure round-off.
pub fn pythagorean_q_residual(t: &Tensor3, q: &LiftedQ) -> Result<f64> {
    let q_tensor = q.tensor()?;
    let d_tq = tensor_divergence(t, &q_tensor)?;
    if !d_tq.is_finite() {
        return Err(Error::InfiniteDivergence);
    }
    let q_star = project_to_q(t)?;
    let q_star_tensor = q_star.tensor()?;
    let d_tqstar = tensor_divergence(t, &q_star_tensor)?;
    let d_qstarq = tensor_divergence(&q_star_tensor, &q_tensor)?;
    if !d_tqstar.is_finite() || !d_qstarq.is_finite() {
        return Err(Error::InfiniteDivergence);
    }
    Ok(d_tq.value() - d_tqstar.value() - d_qstarq.value())
}

/// Residual of the Pythagorean identity through the marginal-set projection:
/// `D(T ‖ Q) − D(T ‖ T*) − D(P ‖ Q₋Q₊)` with `T* = project_to_p(P, Q)`,
/// using the exact relation `D(T* ‖ Q) = D(P ‖ Q₋Q₊)`.
///
/// `T` must lie in the marginal set of `P` (marginal within
/// [`MEMBERSHIP_TOL`]); otherwise [`Error::MarginalMismatch`] is returned.
pub fn pythagorean_p_residual(t: &Tensor3, p: &DataMatrix, q: &LiftedQ) -> Result<f64> {
    let t_marginal = marginal_array(t);
    if t_marginal.dim() != p.dims() {
        return Err(Error::ShapeMismatch {
            expected_rows: p.rows(),
            expected_cols: p.cols(),
            found_rows: t_marginal.nrows(),
            found_cols: t_marginal.ncols(),
        });
    }
    let gap = max_abs_diff(&t_marginal, p.as_array());
    let p_max = p.as_array().iter().cloned().fold(0.0, f64::max);
    if gap > MEMBERSHIP_TOL * (1.0 + p_max) {
        return Err(Error::MarginalMismatch { gap });
    }
    let q_tensor = q.tensor()?;
    let d_tq = tensor_divergence(t, &q_tensor)?;
    if !d_tq.is_finite() {
        return Err(Error::InfiniteDivergence);
    }
    let t_star = project_to_p(p, q)?;
    let d_ttstar = tensor_divergence(t, &t_star)?;
    let d_matrix = i_divergence(p.as_array(), &q.marginal_matrix())?;
    if !d_ttstar.is_finite() || !d_matrix.is_finite() {
        return Err(Error::InfiniteDivergence);
    }
    Ok(d_tq.value() - d_ttstar.value() - d_matrix.value())
}

/// Signed gap of the identity `D(T*(Q) ‖ Q) = D(P ‖ Q₋Q₊)`.
pub fn projection_divergence_gap(p: &DataMatrix, q: &LiftedQ) -> Result<f64> {
    let t_star = project_to_p(p, q)?;
    let d_lifted = tensor_divergence(&t_star, &q.tensor()?)?;
    let d_matrix = i_divergence(p.as_array(), &q.marginal_matrix())?;
    if !d_lifted.is_finite() || !d_matrix.is_finite() {
        return Err(Error::InfiniteDivergence);
    }
    Ok(d_lifted.value() - d_matrix.value())
}

/// Outcome of [`factorization_witness`].
#[derive(Debug, Clone)]
pub struct FactorizationWitness {
    /// The induced tensor `Q(i,l,j) = W(i,l)·H(l,j)`.
    pub tensor: Tensor3,
    /// Max-norm gap between the tensor's marginal and `V`.
    pub marginal_gap: f64,
    /// True when the gap is within `WITNESS_TOL · (1 + max V)`: the tensor
    /// then lies in both lifted sets, certifying `V = WH`.
    pub certified: bool,
}

/// Build the product-form tensor of `(W, H)` and test whether its marginal
/// reproduces `V`, i.e. whether the factorization is exact.
pub fn factorization_witness(v: &DataMatrix, f: &FactorPair) -> Result<FactorizationWitness> {
    if f.dims() != v.dims() {
        return Err(Error::ShapeMismatch {
            expected_rows: v.rows(),
            expected_cols: v.cols(),
            found_rows: f.dims().0,
            found_cols: f.dims().1,
        });
    }
    let tensor = LiftedQ::from_factors(f).tensor()?;
    let gap = max_abs_diff(&marginal_array(&tensor), v.as_array());
    let v_max = v.as_array().iter().cloned().fold(0.0, f64::max);
    let certified = gap <= WITNESS_TOL * (1.0 + v_max);
    Ok(FactorizationWitness {
        tensor,
        marginal_gap: gap,
        certified,
    })
}

/// The three pieces of the chain-rule decomposition computed by
/// [`conditional_divergence_decomposition`].
#[derive(Debug, Clone, Copy)]
pub struct ConditionalDecomposition {
    /// `D(P ‖ Q)` between the joint laws.
    pub joint: f64,
    /// Expected conditional divergence `E_P D(P(·|v) ‖ Q(·|v))`.
    pub conditional: f64,
    /// Divergence between the second-coordinate marginals.
    pub marginal: f64,
}

impl ConditionalDecomposition {
    /// `joint − conditional − marginal`; identically zero in exact
    /// arithmetic.
    pub fn residual(&self) -> f64 {
        self.joint - self.conditional - self.marginal
    }
}

/// Chain rule for the I-divergence between two joint laws of a pair `(U, V)`
/// given as matrices with `U` on rows and `V` on columns:
///
/// ```text
/// D(P ‖ Q) = E_P D(P(U|V) ‖ Q(U|V)) + D(P_V ‖ Q_V)
/// ```
///
/// Both inputs must be probability distributions (sum one within
/// [`NORMALIZATION_TOL`]) and `Q` must be positive wherever `P` is.
pub fn conditional_divergence_decomposition(
    pj: &DataMatrix,
    qj: &DataMatrix,
) -> Result<ConditionalDecomposition> {
    if pj.dims() != qj.dims() {
        return Err(Error::ShapeMismatch {
            expected_rows: pj.rows(),
            expected_cols: pj.cols(),
            found_rows: qj.rows(),
            found_cols: qj.cols(),
        });
    }
    for m in [pj, qj] {
        let sum = m.total_mass();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized {
                sum,
                tol: NORMALIZATION_TOL,
            });
        }
    }
    let (nu, nv) = pj.dims();
    for i in 0..nu {
        for j in 0..nv {
            if pj.get(i, j) > 0.0 && qj.get(i, j) == 0.0 {
                return Err(Error::Singularity { row: i, col: j });
            }
        }
    }

    let pv: Vec<f64> = (0..nv).map(|j| (0..nu).map(|i| pj.get(i, j)).sum()).collect();
    let qv: Vec<f64> = (0..nv).map(|j| (0..nu).map(|i| qj.get(i, j)).sum()).collect();

    let joint = divergence_cells(pj.as_array().iter().zip(qj.as_array().iter()));
    let marginal = divergence_cells(pv.iter().zip(qv.iter()));

    let mut conditional = crate::divergence::CompensatedSum::default();
    for j in 0..nv {
        if pv[j] == 0.0 {
            continue;
        }
        let mut inner = crate::divergence::CompensatedSum::default();
        for i in 0..nu {
            let p_cond = pj.get(i, j) / pv[j];
            if p_cond == 0.0 {
                continue;
            }
            let q_cond = qj.get(i, j) / qv[j];
            inner.add(p_cond * (p_cond / q_cond).ln());
        }
        conditional.add(pv[j] * inner.total());
    }

    Ok(ConditionalDecomposition {
        joint,
        conditional: conditional.total(),
        marginal,
    })
}

/// One full cycle of the alternating scheme: project onto the marginal set,
/// then back onto the product set. Composing the two closed forms is
/// algebraically one multiplicative update of `(W, H)`.
pub fn lifted_iteration(p: &DataMatrix, q: &LiftedQ) -> Result<LiftedQ> {
    let t = project_to_p(p, q)?;
    project_to_q(&t)
}

/// Per-trial record from [`double_minimization_check`].
#[derive(Debug, Clone, Copy)]
pub struct DoubleMinRun {
    /// `D(T_n ‖ Q_n)` at the trial's final iterate.
    pub final_lifted: f64,
    /// `D(P ‖ Q₋Q₊)` at the trial's final iterate.
    pub final_matrix: f64,
    /// `|final_lifted − final_matrix|`.
    pub agreement_gap: f64,
    /// Largest per-iteration `|D(T_n ‖ Q_n) − D(P ‖ Q_n)|` seen in the trial.
    pub max_iteration_gap: f64,
    pub iterations: usize,
}

/// Report from [`double_minimization_check`].
#[derive(Debug, Clone)]
pub struct DoubleMinReport {
    pub runs: Vec<DoubleMinRun>,
    /// Smallest final lifted divergence across trials.
    pub min_lifted: f64,
    /// Smallest final matrix divergence across trials.
    pub min_matrix: f64,
}

/// Empirically confirm that minimizing the tensor divergence over both
/// lifted sets attains the same value as the matrix-level problem: run the
/// lifted alternating scheme from `trials` random strictly positive starts
/// and compare `D(T_n ‖ Q_n)` with `D(P ‖ Q₋Q₊)` at every iterate.
///
/// Restricted to `m·k·n <= DOUBLE_MIN_CAP`.
pub fn double_minimization_check(
    p: &DataMatrix,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<DoubleMinReport> {
    let (m, n) = p.dims();
    if k == 0 {
        return Err(Error::RankOutOfRange { rank: 0, max: m.min(n) });
    }
    let size = m * k * n;
    if size > DOUBLE_MIN_CAP {
        return Err(Error::TensorTooLarge {
            size,
            cap: DOUBLE_MIN_CAP,
        });
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }

    const MAX_ITERS: usize = 500;
    const REL_TOL: f64 = 1e-13;

    let mut runs = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut q = random_lifted(m, k, n, p, seed.wrapping_add(trial as u64));
        let mut d_matrix = i_divergence(p.as_array(), &q.marginal_matrix())?.value();
        let mut d_lifted = lifted_divergence(p, &q)?;
        let mut max_gap = (d_lifted - d_matrix).abs();
        let mut iterations = 0;
        for _ in 0..MAX_ITERS {
            let next = lifted_iteration(p, &q)?;
            let d_next = i_divergence(p.as_array(), &next.marginal_matrix())?.value();
            q = next;
            d_lifted = lifted_divergence(p, &q)?;
            max_gap = max_gap.max((d_lifted - d_next).abs());
            let delta = (d_matrix - d_next).abs();
            d_matrix = d_next;
            iterations += 1;
            if delta <= REL_TOL * d_matrix.max(1.0) {
                break;
            }
        }
        runs.push(DoubleMinRun {
            final_lifted: d_lifted,
            final_matrix: d_matrix,
            agreement_gap: (d_lifted - d_matrix).abs(),
            max_iteration_gap: max_gap,
            iterations,
        });
    }

    let min_lifted = runs.iter().map(|r| r.final_lifted).fold(f64::INFINITY, f64::min);
    let min_matrix = runs.iter().map(|r| r.final_matrix).fold(f64::INFINITY, f64::min);
    Ok(DoubleMinReport {
        runs,
        min_lifted,
        min_matrix,
    })
}

fn lifted_divergence(p: &DataMatrix, q: &LiftedQ) -> Result<f64> {
    let t = project_to_p(p, q)?;
    Ok(tensor_divergence(&t, &q.tensor()?)?.value())
}

/// Strictly positive random product-form start, mass-matched to `p`.
fn random_lifted(m: usize, k: usize, n: usize, p: &DataMatrix, seed: u64) -> LiftedQ {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q_minus = Array2::zeros((m, k));
    for i in 0..m {
        for l in 0..k {
            q_minus[[i, l]] = rng.random_range(0.1..=1.0);
        }
    }
    let target = p.total_mass() / k as f64;
    for l in 0..k {
        let col_sum: f64 = (0..m).map(|i| q_minus[[i, l]]).sum();
        let scale = target / col_sum;
        for i in 0..m {
            q_minus[[i, l]] *= scale;
        }
    }
    let mut q_plus = Array2::zeros((k, n));
    for l in 0..k {
        for j in 0..n {
            q_plus[[l, j]] = rng.random_range(0.1..=1.0);
        }
        let row_sum: f64 = (0..n).map(|j| q_plus[[l, j]]).sum();
        for j in 0..n {
            q_plus[[l, j]] /= row_sum;
        }
    }
    LiftedQ::new(q_minus, q_plus).expect("strictly positive construction")
}

/// Per-iteration oracle measurements recorded when oracle checking is on.
///
/// All residual/gap fields are identically zero in exact arithmetic; the
/// recorded values are floating-point noise whose magnitude certifies the
/// implementation.
#[derive(Debug, Clone, Copy)]
pub struct OracleRecord {
    /// `D(T_n ‖ T_{n+1})`, the marginal-set share of the divergence drop.
    pub gain_p: f64,
    /// `D(Q_{n+1} ‖ Q_n)`, the product-set share of the divergence drop.
    pub gain_q: f64,
    /// `(D_n − D_{n+1}) − gain_p − gain_q`.
    pub gain_residual: f64,
    /// Max elementwise gap between the lifted composition and the
    /// multiplicative update.
    pub equivalence_gap: f64,
    /// Pythagorean residual through the product-set projection.
    pub pyth_q_residual: f64,
    /// Pythagorean residual through the marginal-set projection.
    pub pyth_p_residual: f64,
    /// `|D(T*(Q_{n+1}) ‖ Q_{n+1}) − D(V ‖ W_{n+1}H_{n+1})|`.
    pub marginal_identity_gap: f64,
}

/// Oracle measurements for one solver transition `prev -> next`.
///
/// `t_prev` must be `project_to_p(v, prev)`; the projection of `next` is
/// returned so callers can thread it into the following step.
pub(crate) fn oracle_step(
    v: &DataMatrix,
    prev: &FactorPair,
    next: &FactorPair,
    t_prev: &Tensor3,
    d_prev: f64,
    d_next: f64,
) -> Result<(OracleRecord, Tensor3)> {
    let q_prev = LiftedQ::from_factors(prev);
    let q_next = LiftedQ::from_factors(next);
    let q_prev_tensor = q_prev.tensor()?;
    let q_next_tensor = q_next.tensor()?;
    let t_next = project_to_p(v, &q_next)?;

    let gain_p = tensor_divergence(t_prev, &t_next)?.value();
    let gain_q = tensor_divergence(&q_next_tensor, &q_prev_tensor)?.value();
    let gain_residual = (d_prev - d_next) - gain_p - gain_q;

    let lifted_next = project_to_q(t_prev)?;
    let equivalence_gap = max_abs_diff(lifted_next.q_minus(), next.w())
        .max(max_abs_diff(lifted_next.q_plus(), next.h()));

    let d_tprev_qprev = tensor_divergence(t_prev, &q_prev_tensor)?.value();
    let d_tprev_qnext = tensor_divergence(t_prev, &q_next_tensor)?.value();
    let pyth_q_residual = d_tprev_qprev - d_tprev_qnext - gain_q;
    let pyth_p_residual = d_tprev_qnext - gain_p - d_next;
    let marginal_identity_gap =
        (tensor_divergence(&t_next, &q_next_tensor)?.value() - d_next).abs();

    Ok((
        OracleRecord {
            gain_p,
            gain_q,
            gain_residual,
            equivalence_gap,
            pyth_q_residual,
            pyth_p_residual,
            marginal_identity_gap,
        },
        t_next,
    ))
}
