//! Diagonal-ambiguity alignment and NMSE metrics.
//!
//! The cascade `G (S ⊙ (H X))` is invariant under `(G, H) → (G Φ, Φ⁻¹ H)` for
//! any invertible diagonal `Φ`, so raw estimates are only meaningful up to a
//! per-column scaling of `G` and a per-row scaling of `H` (and of `Z`). Before
//! computing errors, each column/row is fitted with the least-squares scalar
//! against ground truth; the metric is therefore constant on the whole
//! ambiguity orbit.

use num_complex::Complex64;

use crate::bigamp::FactorizationResult;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, CMat, CVec};
use crate::model::ChannelRealization;

/// Ambiguity-aligned estimates plus the fitted diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEstimates {
    pub g_aligned: CMat,
    pub h_aligned: CMat,
    /// Per-column scalars applied to `Ĝ`.
    pub phi_g: CVec,
    /// Per-row scalars applied to `Ĥ`.
    pub phi_h: CVec,
}

/// Everything recorded about one end-to-end trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub g_aligned: CMat,
    pub h_aligned: CMat,
    pub z_hat: CMat,
    /// Aligned NMSEs in linear scale; `None` when the trial failed.
    pub nmse_g: Option<f64>,
    pub nmse_h: Option<f64>,
    pub nmse_z: Option<f64>,
    pub factorization_sweeps: usize,
    pub factorization_converged: bool,
    pub completion_iterations: usize,
    /// Deterministic cost estimate in milliseconds-at-1-Gflop/s; kept instead
    /// of wall-clock time so identical trials are bit-identical.
    pub cost_ms: f64,
    pub failed: bool,
}

/// Least-squares scalar fit of each column of `estimate` against `truth`:
/// `φ_n = (ĝ_nᴴ g_n) / (ĝ_nᴴ ĝ_n)`. Identically-zero estimated columns get
/// `φ_n = 1`. Returns the aligned matrix and the fitted diagonal.
pub fn align_diagonal(estimate: &CMat, truth: &CMat) -> (CMat, CVec) {
    debug_assert_eq!(estimate.shape(), truth.shape());
    let n = estimate.ncols();
    let mut aligned = estimate.clone();
    let mut phi = CVec::from_element(n, Complex64::new(1.0, 0.0));
    for j in 0..n {
        let col = estimate.column(j);
        let denom = col.norm_squared();
        if denom > 0.0 {
            let num = col.dotc(&truth.column(j));
            let scale = num / denom;
            phi[j] = scale;
            for i in 0..estimate.nrows() {
                aligned[(i, j)] = estimate[(i, j)] * scale;
            }
        }
    }
    (aligned, phi)
}

/// Row-wise analogue of [`align_diagonal`], matching the `Φ⁻¹` side of the
/// ambiguity.
pub fn align_rows(estimate: &CMat, truth: &CMat) -> (CMat, CVec) {
    let (aligned_t, phi) = align_diagonal(&estimate.transpose(), &truth.transpose());
    (aligned_t.transpose(), phi)
}

/// Normalized mean-square error `‖estimate - truth‖_F² / ‖truth‖_F²`.
pub fn nmse(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::DimensionMismatch {
            context: "nmse",
            detail: format!(
                "estimate is {}x{}, truth is {}x{}",
                estimate.nrows(),
                estimate.ncols(),
                truth.nrows(),
                truth.ncols()
            ),
        });
    }
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(
            "NMSE reference has zero norm".into(),
        ));
    }
    Ok((estimate - truth).norm_squared() / denom)
}

/// Linear NMSE in decibels.
pub fn nmse_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Fit both sides of the diagonal ambiguity independently: columns of `Ĝ`
/// and rows of `Ĥ`.
pub fn align_estimates(g_hat: &CMat, h_hat: &CMat, truth: &ChannelRealization) -> AlignedEstimates {
    let (g_aligned, phi_g) = align_diagonal(g_hat, &truth.g);
    let (h_aligned, phi_h) = align_rows(h_hat, &truth.h);
    AlignedEstimates {
        g_aligned,
        h_aligned,
        phi_g,
        phi_h,
    }
}

/// Align the pipeline outputs against ground truth and compute all metrics.
///
/// Non-finite estimates or an undefined metric (e.g. an all-off mask giving a
/// zero-norm `Z`) mark the trial as failed; failed trials carry no NMSEs.
pub fn evaluate_trial(
    factorization: &FactorizationResult,
    h_hat: &CMat,
    completion_iterations: usize,
    truth: &ChannelRealization,
    z_true: &CMat,
    cost_ms: f64,
) -> TrialResult {
    let finite = all_finite(&factorization.g_hat) && all_finite(&factorization.z_hat) && all_finite(h_hat);

    let aligned = align_estimates(&factorization.g_hat, h_hat, truth);
    let (z_aligned, _) = align_rows(&factorization.z_hat, z_true);

    let metrics = if finite {
        match (
            nmse(&aligned.g_aligned, &truth.g),
            nmse(&aligned.h_aligned, &truth.h),
            nmse(&z_aligned, z_true),
        ) {
            (Ok(g), Ok(h), Ok(z)) => Some((g, h, z)),
            _ => None,
        }
    } else {
        None
    };

    TrialResult {
        g_aligned: aligned.g_aligned,
        h_aligned: aligned.h_aligned,
        z_hat: factorization.z_hat.clone(),
        nmse_g: metrics.map(|m| m.0),
        nmse_h: metrics.map(|m| m.1),
        nmse_z: metrics.map(|m| m.2),
        factorization_sweeps: factorization.iterations_used,
        factorization_converged: factorization.converged,
        completion_iterations,
        cost_ms,
        failed: metrics.is_none(),
    }
}
