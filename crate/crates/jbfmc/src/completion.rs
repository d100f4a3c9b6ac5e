//! Stage 2: rank-constrained matrix completion and pilot inversion.
//!
//! The factorization stage only sees `Z = S ⊙ (H X)` on the support of `S`.
//! Because `A = H X` inherits the low rank of `H`, the masked entries can be
//! filled by solving `min ½‖S* ⊙ (A - Ẑ)‖_F²  s.t.  rank(A) = r`. The main
//! solver is the Riemannian gradient iteration (`RGrad`): masked residual,
//! projection onto the current left singular subspace, an exact step size,
//! and a rank-`r` hard threshold. Iterative hard thresholding (IHT) and
//! iterative soft thresholding (IST) are provided as baselines.
//!
//! Once `A` is completed, `H` follows from the right pseudo-inverse of the
//! full-row-rank pilots: `Ĥ = Â Xᴴ (X Xᴴ)⁻¹`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{svd_checked, CMat};

/// A masked low-rank completion instance.
#[derive(Debug, Clone)]
pub struct CompletionProblem {
    /// Observed matrix (`N×T`), exactly zero off the mask support.
    pub observed: CMat,
    /// Sampling mask (`N×T`); entries are zero or unit modulus. The conjugate
    /// of the mask is applied inside the iterations, which reduces to plain
    /// 0/1 masking for the fixed-zero-phase pilots used here.
    pub mask: CMat,
    /// Target rank `r`.
    pub target_rank: usize,
}

impl CompletionProblem {
    pub fn new(observed: CMat, mask: CMat, target_rank: usize) -> Result<Self> {
        if observed.shape() != mask.shape() {
            return Err(Error::DimensionMismatch {
                context: "CompletionProblem",
                detail: format!(
                    "observed is {}x{}, mask is {}x{}",
                    observed.nrows(),
                    observed.ncols(),
                    mask.nrows(),
                    mask.ncols()
                ),
            });
        }
        let max_rank = observed.nrows().min(observed.ncols());
        if target_rank == 0 || target_rank > max_rank {
            return Err(Error::Config(format!(
                "target_rank ({target_rank}) must be in [1, {max_rank}]"
            )));
        }
        let leakage = observed
            .iter()
            .zip(mask.iter())
            .any(|(z, s)| s.norm_sqr() == 0.0 && z.norm_sqr() != 0.0);
        if leakage {
            return Err(Error::Config(
                "observed matrix has nonzero entries outside the mask support".into(),
            ));
        }
        Ok(Self {
            observed,
            mask,
            target_rank,
        })
    }

    /// `½‖S* ⊙ (A - Ẑ)‖_F²`, the objective the solvers minimize.
    pub fn objective(&self, a: &CMat) -> f64 {
        let mut acc = 0.0;
        for ((ai, zi), si) in a.iter().zip(self.observed.iter()).zip(self.mask.iter()) {
            acc += (si.conj() * (ai - zi)).norm_sqr();
        }
        0.5 * acc
    }

    /// Masked residual `S* ⊙ (Ẑ - A)`.
    fn masked_residual(&self, a: &CMat) -> CMat {
        CMat::from_fn(a.nrows(), a.ncols(), |i, j| {
            self.mask[(i, j)].conj() * (self.observed[(i, j)] - a[(i, j)])
        })
    }

    fn apply_mask(&self, m: &CMat) -> CMat {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
            self.mask[(i, j)].conj() * m[(i, j)]
        })
    }
}

/// Solver options shared by RGrad, IHT and IST.
#[derive(Debug, Clone)]
pub struct CompletionOptions {
    /// Iteration cap (`K_max`).
    pub max_iters: usize,
    /// Relative objective-change tolerance.
    pub tol: f64,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-10,
        }
    }
}

/// Output of a completion solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    /// Completed matrix `Â`.
    pub completed: CMat,
    pub iterations_used: usize,
    /// Objective value at the starting point and after every iteration.
    pub objective_history: Vec<f64>,
}

/// Best rank-`r` approximation via truncated SVD (Eckart–Young optimal).
///
/// Ties among equal singular values keep the earliest indices of the
/// descending SVD ordering.
pub fn hard_threshold(w: &CMat, r: usize) -> Result<CMat> {
    let max_rank = w.nrows().min(w.ncols());
    if r > max_rank {
        return Err(Error::Config(format!(
            "rank {r} exceeds min dimension {max_rank}"
        )));
    }
    let mut svd = svd_checked(w)?;
    for i in r..svd.singular_values.len() {
        svd.singular_values[i] = 0.0;
    }
    svd.recompose().map_err(|_| Error::SvdFailure)
}

/// Orthogonal projection of `q` onto the span of the leading `r` left singular
/// vectors of `a_k`. For `a_k = 0` (the canonical starting point) the
/// projection is defined as the identity.
pub fn project_subspace(q: &CMat, a_k: &CMat, r: usize) -> Result<CMat> {
    if q.shape() != a_k.shape() {
        return Err(Error::DimensionMismatch {
            context: "project_subspace",
            detail: format!(
                "Q is {}x{}, A is {}x{}",
                q.nrows(),
                q.ncols(),
                a_k.nrows(),
                a_k.ncols()
            ),
        });
    }
    if a_k.iter().all(|c| c.norm_sqr() == 0.0) {
        return Ok(q.clone());
    }
    let svd = a_k
        .clone()
        .try_svd(true, false, f64::EPSILON, 4096)
        .ok_or(Error::SvdFailure)?;
    let u = svd.u.as_ref().expect("u requested");
    let u_r = u.columns(0, r.min(u.ncols()));
    Ok(&u_r * (u_r.adjoint() * q))
}

/// One RGrad iteration: masked residual, subspace projection, exact step
/// size, hard threshold.
pub fn rgrad_step(a_k: &CMat, problem: &CompletionProblem) -> Result<CMat> {
    let q = problem.masked_residual(a_k);
    let pq = project_subspace(&q, a_k, problem.target_rank)?;
    let num = pq.norm_squared();
    let den = problem.apply_mask(&pq).norm_squared();
    // A zero denominator only occurs when the projected residual vanishes,
    // i.e. at convergence; the step direction is zero so any α works.
    let alpha = if den > 0.0 { num / den } else { 1.0 };
    let w = a_k + pq.scale(alpha);
    hard_threshold(&w, problem.target_rank)
}

fn run_thresholded<F>(
    problem: &CompletionProblem,
    opts: &CompletionOptions,
    mut step: F,
) -> Result<CompletionResult>
where
    F: FnMut(&CMat, usize) -> Result<CMat>,
{
    let mut a = CMat::zeros(problem.observed.nrows(), problem.observed.ncols());
    let mut objective_history = vec![problem.objective(&a)];
    let floor = 1e-30 * problem.observed.norm_squared().max(1.0);
    let mut iterations_used = 0;

    for k in 0..opts.max_iters {
        a = step(&a, k)?;
        iterations_used = k + 1;
        let obj = problem.objective(&a);
        let prev = *objective_history.last().expect("nonempty");
        objective_history.push(obj);
        if obj <= floor {
            break;
        }
        if (prev - obj).abs() <= opts.tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    Ok(CompletionResult {
        completed: a,
        iterations_used,
        objective_history,
    })
}

/// Riemannian gradient iteration from `A(0) = 0`.
pub fn run_rgrad(problem: &CompletionProblem, opts: &CompletionOptions) -> Result<CompletionResult> {
    run_thresholded(problem, opts, |a, _| rgrad_step(a, problem))
}

/// Iterative hard thresholding with unit step size:
/// `A ← H_r(A + S* ⊙ (Ẑ - A))`.
pub fn run_iht(problem: &CompletionProblem, opts: &CompletionOptions) -> Result<CompletionResult> {
    run_thresholded(problem, opts, |a, _| {
        let w = a + problem.masked_residual(a);
        hard_threshold(&w, problem.target_rank)
    })
}

/// Iterative soft thresholding (singular value thresholding) with unit step
/// size. The threshold `τ` is fixed from the first iterate as its
/// `(r+1)`-th singular value, i.e. the largest singular value the rank-`r`
/// target should not contain.
pub fn run_ist(problem: &CompletionProblem, opts: &CompletionOptions) -> Result<CompletionResult> {
    let mut tau: Option<f64> = None;
    run_thresholded(problem, opts, |a, k| {
        let w = a + problem.masked_residual(a);
        if k == 0 {
            let sv = w.clone().singular_values();
            tau = Some(if problem.target_rank < sv.len() {
                sv[problem.target_rank]
            } else {
                0.0
            });
        }
        soft_threshold(&w, tau.expect("set on first iterate"))
    })
}

/// Soft-threshold all singular values by `τ`.
pub fn soft_threshold(w: &CMat, tau: f64) -> Result<CMat> {
    let mut svd = svd_checked(w)?;
    for s in svd.singular_values.iter_mut() {
        *s = (*s - tau).max(0.0);
    }
    svd.recompose().map_err(|_| Error::SvdFailure)
}

/// Recover `H` from the completed `Â ≈ H X` using the right pseudo-inverse
/// `X† = Xᴴ (X Xᴴ)⁻¹`, which exists when `X` has full row rank and `T ≥ M`.
pub fn recover_h(a_hat: &CMat, pilots: &CMat) -> Result<CMat> {
    let (m, t) = pilots.shape();
    if a_hat.ncols() != t {
        return Err(Error::DimensionMismatch {
            context: "recover_h",
            detail: format!("A has {} columns, X has {t}", a_hat.ncols()),
        });
    }
    if t < m {
        return Err(Error::Config(format!(
            "pilot length ({t}) must be at least the number of transmit antennas ({m})"
        )));
    }
    let gram = pilots * pilots.adjoint();
    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::RankDeficient("pilot matrix X does not have full row rank".into())
    })?;
    // Ĥ = Â Xᴴ (X Xᴴ)⁻¹ solved as (X Xᴴ) Ĥᴴ = X Âᴴ.
    let rhs = pilots * a_hat.adjoint();
    Ok(chol.solve(&rhs).adjoint())
}
