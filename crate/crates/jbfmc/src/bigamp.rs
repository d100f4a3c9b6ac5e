//! Stage 1: bilinear generalized approximate message passing (BiG-AMP).
//!
//! Estimates the dense factor `G` (`L×N`) and the sparse factor `Z` (`N×T`)
//! of the bilinear model `Y = G Z + W` by loopy belief propagation with
//! Gaussian message approximations. The prior on `G` entries is CN(0, ν_g);
//! the prior on `Z` entries is Bernoulli-Gaussian with the Bernoulli part
//! pinned by the known support mask, so off-support entries are point masses
//! at zero and stay exactly zero through every sweep.
//!
//! One sweep performs, in order: plug-in output moments, the Onsager
//! correction, the posterior update of the noiseless output `B = G Z` under
//! the Gaussian likelihood, the scaled residual, pseudo-observations for `G`
//! and `Z`, and finally the scalar input denoisers. All heavy sums are
//! expressed as real or complex matrix products, which keeps a sweep at
//! `O(L·N·T)` flops.
//!
//! The outer loop restarts the sparse factor from its initialization while
//! carrying the current estimate of `G` forward, and the best restart is
//! selected by the data residual `‖Y - Ĝ Ẑ‖_F`.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, all_finite_real, crandn, CMat, RMat};

/// Floor applied to every variance that appears in a division.
pub const VAR_FLOOR: f64 = 1e-12;

/// Residual growth factor (relative to the restart's best) that triggers an
/// early restart.
const DIVERGENCE_RATIO: f64 = 5.0;

/// Prior parameters of the bilinear model.
#[derive(Debug, Clone)]
pub struct Priors {
    /// Variance of the CN(0, ν_g) prior on entries of `G`.
    pub nu_g: f64,
    /// Variance of the Gaussian part of the Bernoulli-Gaussian prior on `Z`.
    pub nu_z: f64,
    /// Noise power σ² of the observation likelihood.
    pub noise_power: f64,
    /// Known on/off support of `Z` (`N×T`, entries 0 or 1).
    pub support: RMat,
}

impl Priors {
    pub fn new(nu_g: f64, nu_z: f64, noise_power: f64, support: RMat) -> Result<Self> {
        if !(nu_g > 0.0) || !(nu_z > 0.0) {
            return Err(Error::Config(format!(
                "prior variances must be positive (nu_g = {nu_g}, nu_z = {nu_z})"
            )));
        }
        if !(noise_power >= 0.0) || !noise_power.is_finite() {
            return Err(Error::Config(format!(
                "noise power must be finite and nonnegative, got {noise_power}"
            )));
        }
        if support.iter().any(|&s| s != 0.0 && s != 1.0) {
            return Err(Error::Config("support mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            nu_g,
            nu_z,
            noise_power,
            support,
        })
    }

    /// Fraction of observed entries in the support mask.
    pub fn support_fraction(&self) -> f64 {
        if self.support.is_empty() {
            return 0.0;
        }
        self.support.sum() / self.support.len() as f64
    }
}

/// Iteration options.
#[derive(Debug, Clone)]
pub struct BigAmpOptions {
    /// Maximum number of outer restarts (`I_max`).
    pub max_restarts: usize,
    /// Maximum number of inner sweeps per restart (`J_max`).
    pub max_sweeps: usize,
    /// Relative-change tolerance on the corrected output mean `p̂` that stops
    /// the inner loop.
    pub tol: f64,
    /// Damping factor in (0, 1] applied to carried means and variances;
    /// 1 reproduces the undamped listing.
    pub damping: f64,
    /// Initialize on-support entries of `ẑ` from CN(0, 0.01·ν_z) instead of
    /// the prior mean, to break the all-zero symmetric point.
    pub jitter: bool,
}

impl Default for BigAmpOptions {
    fn default() -> Self {
        Self {
            max_restarts: 10,
            max_sweeps: 500,
            tol: 1e-6,
            damping: 0.7,
            jitter: false,
        }
    }
}

/// All per-entry means and variances carried by the message-passing sweep.
#[derive(Debug, Clone)]
pub struct BigAmpState {
    /// Mean and variance of `G` (`L×N`).
    pub g_hat: CMat,
    pub v_g: RMat,
    /// Mean and variance of `Z` (`N×T`); exactly zero off support.
    pub z_hat: CMat,
    pub v_z: RMat,
    /// Scaled residual (Onsager memory) and its variance (`L×T`).
    pub u_hat: CMat,
    pub v_u: RMat,
    /// Plug-in output moments (`L×T`).
    pub p_bar: CMat,
    pub v_p_bar: RMat,
    /// Onsager-corrected output moments (`L×T`).
    pub p_hat: CMat,
    pub v_p: RMat,
    /// Posterior output moments (`L×T`).
    pub b_hat: CMat,
    pub v_b: RMat,
    /// Pseudo-observations for `G` (`L×N`).
    pub q_hat: CMat,
    pub v_q: RMat,
    /// Pseudo-observations for `Z` (`N×T`).
    pub r_hat: CMat,
    pub v_r: RMat,
    /// Total sweeps executed so far (diagnostic, drives divergence reports).
    pub sweeps: usize,
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationResult {
    pub g_hat: CMat,
    pub z_hat: CMat,
    /// Total inner sweeps executed across all restarts.
    pub iterations_used: usize,
    /// Best residual `‖Y - Ĝ Ẑ‖_F` after each restart (running minimum, so
    /// the sequence is nonincreasing by construction).
    pub residual_history: Vec<f64>,
    /// False when every restart diverged or no stopping criterion was met.
    pub converged: bool,
}

/// Initialize the message-passing state: `ĝ` drawn from its prior,
/// `v^g = ν_g`, `ẑ` at the prior mean, `v^z = λ·ν_z` on support and zero off
/// support, zero residual memory.
pub fn init_state<R: Rng + ?Sized>(
    priors: &Priors,
    opts: &BigAmpOptions,
    l: usize,
    rng: &mut R,
) -> BigAmpState {
    let (n, t) = priors.support.shape();
    let lambda = priors.support_fraction();
    let g_scale = priors.nu_g.sqrt();
    let g_hat = CMat::from_fn(l, n, |_, _| crandn(rng) * g_scale);
    let jitter_scale = (0.01 * priors.nu_z).sqrt();
    let z_hat = CMat::from_fn(n, t, |i, j| {
        if opts.jitter && priors.support[(i, j)] == 1.0 {
            crandn(rng) * jitter_scale
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let v_z = priors.support.map(|s| s * lambda * priors.nu_z);
    BigAmpState {
        g_hat,
        v_g: RMat::from_element(l, n, priors.nu_g),
        z_hat,
        v_z,
        u_hat: CMat::zeros(l, t),
        v_u: RMat::zeros(l, t),
        p_bar: CMat::zeros(l, t),
        v_p_bar: RMat::zeros(l, t),
        p_hat: CMat::zeros(l, t),
        v_p: RMat::zeros(l, t),
        b_hat: CMat::zeros(l, t),
        v_b: RMat::zeros(l, t),
        q_hat: CMat::zeros(l, n),
        v_q: RMat::zeros(l, n),
        r_hat: CMat::zeros(n, t),
        v_r: RMat::zeros(n, t),
        sweeps: 0,
    }
}

/// Posterior mean and variance of a CN(0, ν_g) variable observed through a
/// Gaussian pseudo-likelihood CN(q̂, v^q).
///
/// Nonpositive `v_q` is clamped to [`VAR_FLOOR`].
pub fn denoise_g(q_hat: Complex64, v_q: f64, nu_g: f64) -> (Complex64, f64) {
    let v_q = v_q.max(VAR_FLOOR);
    let denom = nu_g + v_q;
    (q_hat * (nu_g / denom), nu_g * v_q / denom)
}

/// Posterior mean and variance of a Bernoulli-Gaussian variable with known
/// on/off state `on_support`; the off state is a point mass at zero.
pub fn denoise_z(r_hat: Complex64, v_r: f64, on_support: bool, nu_z: f64) -> (Complex64, f64) {
    if !on_support {
        return (Complex64::new(0.0, 0.0), 0.0);
    }
    let v_r = v_r.max(VAR_FLOOR);
    let denom = nu_z + v_r;
    (r_hat * (nu_z / denom), nu_z * v_r / denom)
}

/// Convex damping of a complex field: `δ·new + (1-δ)·old`, written into `old`.
fn damp_c(old: &mut CMat, new: CMat, delta: f64) {
    if delta >= 1.0 {
        *old = new;
    } else {
        old.zip_apply(&new, |o, n| *o = *o * (1.0 - delta) + n * delta);
    }
}

fn damp_r(old: &mut RMat, new: RMat, delta: f64) {
    if delta >= 1.0 {
        *old = new;
    } else {
        old.zip_apply(&new, |o, n| *o = *o * (1.0 - delta) + n * delta);
    }
}

/// One full message-passing sweep over all matrix entries.
///
/// Carried quantities (`ĝ`, `v^g`, `ẑ`, `v^z`, `û`, `v^u`) are damped by
/// `damping`; everything else is recomputed in place. Returns a divergence
/// error if any field becomes non-finite.
pub fn iterate(state: &mut BigAmpState, y: &CMat, priors: &Priors, damping: f64) -> Result<()> {
    let sigma2 = priors.noise_power;
    let (l, t) = y.shape();
    let n = priors.support.nrows();
    debug_assert_eq!(state.g_hat.shape(), (l, n));
    debug_assert_eq!(state.z_hat.shape(), (n, t));

    let g_abs2 = state.g_hat.map(|c| c.norm_sqr());
    let z_abs2 = state.z_hat.map(|c| c.norm_sqr());

    // Plug-in output moments.
    state.v_p_bar = (&g_abs2 * &state.v_z + &state.v_g * &z_abs2).map(|v| v.max(VAR_FLOOR));
    state.p_bar = &state.g_hat * &state.z_hat;
    state.v_p = (&state.v_p_bar + &state.v_g * &state.v_z).map(|v| v.max(VAR_FLOOR));

    // Onsager correction using the residual memory of the previous sweep.
    state.p_hat = CMat::from_fn(l, t, |i, j| {
        state.p_bar[(i, j)] - state.u_hat[(i, j)] * state.v_p_bar[(i, j)]
    });

    // Posterior of the noiseless output under the Gaussian likelihood.
    state.v_b = RMat::from_fn(l, t, |i, j| {
        let vp = state.v_p[(i, j)];
        (sigma2 * vp / (vp + sigma2).max(VAR_FLOOR)).max(VAR_FLOOR)
    });
    state.b_hat = CMat::from_fn(l, t, |i, j| {
        let vp = state.v_p[(i, j)];
        state.p_hat[(i, j)] + (y[(i, j)] - state.p_hat[(i, j)]) * (vp / (vp + sigma2).max(VAR_FLOOR))
    });

    // Scaled residual.
    let v_u_new = RMat::from_fn(l, t, |i, j| {
        let vp = state.v_p[(i, j)];
        ((1.0 - state.v_b[(i, j)] / vp) / vp).max(VAR_FLOOR)
    });
    let u_new = CMat::from_fn(l, t, |i, j| {
        (state.b_hat[(i, j)] - state.p_hat[(i, j)]) / state.v_p[(i, j)]
    });
    damp_c(&mut state.u_hat, u_new, damping);
    damp_r(&mut state.v_u, v_u_new, damping);

    // Pseudo-observations for G.
    let weight_q = &state.v_u * z_abs2.transpose(); // Σ_t |ẑ|² v^u
    state.v_q = weight_q.map(|w| 1.0 / w.max(VAR_FLOOR));
    let vz_vu = &state.v_u * state.v_z.transpose(); // Σ_t v^z v^u
    let zu = &state.u_hat * state.z_hat.adjoint(); // Σ_t ẑ* û
    state.q_hat = CMat::from_fn(l, n, |i, j| {
        let vq = state.v_q[(i, j)];
        state.g_hat[(i, j)] * (1.0 - vq * vz_vu[(i, j)]) + zu[(i, j)] * vq
    });

    // Pseudo-observations for Z.
    let weight_r = g_abs2.transpose() * &state.v_u; // Σ_l |ĝ|² v^u
    state.v_r = weight_r.map(|w| 1.0 / w.max(VAR_FLOOR));
    let vg_vu = state.v_g.transpose() * &state.v_u; // Σ_l v^g v^u
    let gu = state.g_hat.adjoint() * &state.u_hat; // Σ_l ĝ* û
    state.r_hat = CMat::from_fn(n, t, |i, j| {
        let vr = state.v_r[(i, j)];
        state.z_hat[(i, j)] * (1.0 - vr * vg_vu[(i, j)]) + gu[(i, j)] * vr
    });

    // Input denoising.
    let mut g_new = CMat::zeros(l, n);
    let mut v_g_new = RMat::zeros(l, n);
    for j in 0..n {
        for i in 0..l {
            let (m, v) = denoise_g(state.q_hat[(i, j)], state.v_q[(i, j)], priors.nu_g);
            g_new[(i, j)] = m;
            v_g_new[(i, j)] = v;
        }
    }
    let mut z_new = CMat::zeros(n, t);
    let mut v_z_new = RMat::zeros(n, t);
    for j in 0..t {
        for i in 0..n {
            let on = priors.support[(i, j)] == 1.0;
            let (m, v) = denoise_z(state.r_hat[(i, j)], state.v_r[(i, j)], on, priors.nu_z);
            z_new[(i, j)] = m;
            v_z_new[(i, j)] = v;
        }
    }
    damp_c(&mut state.g_hat, g_new, damping);
    damp_r(&mut state.v_g, v_g_new, damping);
    damp_c(&mut state.z_hat, z_new, damping);
    damp_r(&mut state.v_z, v_z_new, damping);

    state.sweeps += 1;

    let finite = all_finite(&state.g_hat)
        && all_finite(&state.z_hat)
        && all_finite(&state.u_hat)
        && all_finite(&state.p_hat)
        && all_finite(&state.b_hat)
        && all_finite(&state.q_hat)
        && all_finite(&state.r_hat)
        && all_finite_real(&state.v_g)
        && all_finite_real(&state.v_z)
        && all_finite_real(&state.v_p)
        && all_finite_real(&state.v_q)
        && all_finite_real(&state.v_r);
    if !finite {
        return Err(Error::Divergence {
            sweep: state.sweeps,
        });
    }
    Ok(())
}

/// Run the full factorization: inner sweeps until the relative change of `p̂`
/// drops below `opts.tol`, with up to `opts.max_restarts` outer restarts that
/// carry `Ĝ` forward while resetting the sparse factor (and the residual
/// memory) to its initialization. Returns the restart state with the smallest
/// data residual; if every restart diverges the best finite state seen is
/// returned with `converged = false`.
pub fn run<R: Rng + ?Sized>(
    y: &CMat,
    priors: &Priors,
    opts: &BigAmpOptions,
    rng: &mut R,
) -> Result<FactorizationResult> {
    if !all_finite(y) {
        return Err(Error::Config("observation matrix contains non-finite entries".into()));
    }
    let (l, t) = y.shape();
    if priors.support.ncols() != t {
        return Err(Error::DimensionMismatch {
            context: "bigamp::run",
            detail: format!(
                "support is {}x{} but Y has {} columns",
                priors.support.nrows(),
                priors.support.ncols(),
                t
            ),
        });
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Config(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }

    let mut state = init_state(priors, opts, l, rng);
    let z_init = state.z_hat.clone();
    let v_z_init = state.v_z.clone();

    let y_norm = y.norm();
    // Residual of a perfect estimate is the noise norm; stop restarting once
    // we are at that floor.
    let noise_floor = 1.05 * (priors.noise_power * (l * t) as f64).sqrt();
    let outer_stop = noise_floor.max(1e-8 * y_norm);

    let mut best: Option<(f64, CMat, CMat)> = None;
    let mut residual_history = Vec::with_capacity(opts.max_restarts);
    let mut converged = false;
    let mut stale_restarts = 0usize;

    for restart in 0..opts.max_restarts {
        if restart > 0 {
            state.z_hat = z_init.clone();
            state.v_z = v_z_init.clone();
            state.u_hat.fill(Complex64::new(0.0, 0.0));
            state.v_u.fill(0.0);
        }

        let mut restart_best: Option<(f64, CMat, CMat)> = None;
        let mut p_prev: Option<CMat> = None;

        for _sweep in 0..opts.max_sweeps {
            if iterate(&mut state, y, priors, opts.damping).is_err() {
                break;
            }
            let residual = (y - &state.g_hat * &state.z_hat).norm();
            if residual.is_finite()
                && restart_best.as_ref().map_or(true, |(r, _, _)| residual < *r)
            {
                restart_best = Some((residual, state.g_hat.clone(), state.z_hat.clone()));
            }

            // Relative change of the corrected output mean.
            if let Some(prev) = &p_prev {
                let prev_norm = prev.norm();
                let delta = (&state.p_hat - prev).norm();
                let rel = if prev_norm > 1e-30 {
                    delta / prev_norm
                } else {
                    delta
                };
                if rel < opts.tol {
                    converged = true;
                    break;
                }
            }
            p_prev = Some(state.p_hat.clone());

            // Early restart once the residual has blown up past its best.
            if let Some((best_res, _, _)) = &restart_best {
                if residual > DIVERGENCE_RATIO * best_res.max(outer_stop) {
                    break;
                }
            }
        }

        let improved = match (&restart_best, &best) {
            (Some((r, _, _)), Some((b, _, _))) => *r < *b * (1.0 - 1e-2),
            (Some(_), None) => true,
            (None, _) => false,
        };
        if let Some((r, g, z)) = restart_best {
            if best.as_ref().map_or(true, |(b, _, _)| r < *b) {
                best = Some((r, g, z));
            }
        }
        residual_history.push(best.as_ref().map_or(f64::INFINITY, |(r, _, _)| *r));

        if let Some((r, _, _)) = &best {
            if *r <= outer_stop {
                converged = true;
                break;
            }
        }
        stale_restarts = if improved { 0 } else { stale_restarts + 1 };
        if stale_restarts >= 2 {
            break;
        }
    }

    let iterations_used = state.sweeps;
    match best {
        Some((_, g_hat, z_hat)) => Ok(FactorizationResult {
            g_hat,
            z_hat,
            iterations_used,
            residual_history,
            converged,
        }),
        // Every sweep of every restart produced non-finite values; hand back
        // the (finite) initialization flagged as non-converged.
        None => Ok(FactorizationResult {
            g_hat: CMat::zeros(l, priors.support.nrows()),
            z_hat: z_init,
            iterations_used,
            residual_history,
            converged: false,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::crandn_mat;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full_support(n: usize, t: usize) -> RMat {
        RMat::from_element(n, t, 1.0)
    }

    fn bernoulli_support(n: usize, t: usize, lambda: f64, rng: &mut ChaCha8Rng) -> RMat {
        RMat::from_fn(n, t, |_, _| if rng.random::<f64>() < lambda { 1.0 } else { 0.0 })
    }

    #[test]
    fn init_matches_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let support = full_support(4, 6);
        let priors = Priors::new(2.5, 1.5, 0.1, support).unwrap();
        let state = init_state(&priors, &BigAmpOptions::default(), 3, &mut rng);
        assert!(state.v_g.iter().all(|&v| v == 2.5));
        assert!(state.z_hat.iter().all(|z| z.norm() == 0.0));
        // λ = 1 here, so v^z = ν_z on support.
        assert!(state.v_z.iter().all(|&v| (v - 1.5).abs() < 1e-15));
        assert!(state.u_hat.iter().all(|u| u.norm() == 0.0));
    }

    #[test]
    fn init_jitter_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let support = full_support(60, 80);
        let priors = Priors::new(1.0, 2.0, 0.1, support).unwrap();
        let opts = BigAmpOptions {
            jitter: true,
            ..Default::default()
        };
        let state = init_state(&priors, &opts, 3, &mut rng);
        let var = state.z_hat.iter().map(|z| z.norm_sqr()).sum::<f64>() / state.z_hat.len() as f64;
        // Sample variance of CN(0, 0.01·ν_z) draws.
        assert!((var - 0.02).abs() < 0.004, "jitter variance {var}");
    }

    #[test]
    fn denoise_g_examples() {
        // Equal-variance Gaussian product halves the mean.
        let (m, v) = denoise_g(Complex64::new(2.0, 0.0), 1.0, 1.0);
        assert!((m - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v - 0.5).abs() < 1e-15);

        // Uninformative likelihood returns the prior.
        let (m, v) = denoise_g(Complex64::new(3.0, -1.0), 1e12, 1.0);
        assert!(m.norm() < 1e-10);
        assert!((v - 1.0).abs() < 1e-10);

        // Frozen value cross-checked against the quadrature oracle.
        let (m, v) = denoise_g(Complex64::new(1.0, 1.0), 0.5, 1.5);
        assert!((m - Complex64::new(0.75, 0.75)).norm() < 1e-12);
        assert!((v - 0.375).abs() < 1e-12);
    }

    #[test]
    fn denoise_z_examples() {
        // Off support: point mass at zero.
        let (m, v) = denoise_z(Complex64::new(5.0, 2.0), 0.3, false, 1.0);
        assert_eq!(m, Complex64::new(0.0, 0.0));
        assert_eq!(v, 0.0);

        // Same Gaussian product as denoise_g on support.
        let (m, v) = denoise_z(Complex64::new(1.0, 1.0), 0.5, true, 1.5);
        assert!((m - Complex64::new(0.75, 0.75)).norm() < 1e-12);
        assert!((v - 0.375).abs() < 1e-12);

        // Symmetric posterior about zero.
        let (m, v) = denoise_z(Complex64::new(0.0, 0.0), 1.0, true, 1.0);
        assert_eq!(m, Complex64::new(0.0, 0.0));
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_input_is_fixed_point_of_linear_steps() {
        let support = full_support(2, 4);
        let priors = Priors::new(1.0, 1.0, 0.5, support).unwrap();
        let mut state = init_state(
            &priors,
            &BigAmpOptions::default(),
            3,
            &mut ChaCha8Rng::seed_from_u64(3),
        );
        state.g_hat.fill(Complex64::new(0.0, 0.0));
        let y = CMat::zeros(3, 4);
        iterate(&mut state, &y, &priors, 1.0).unwrap();
        assert!(state.p_bar.iter().all(|p| p.norm() == 0.0));
        assert!(state.p_hat.iter().all(|p| p.norm() == 0.0));
        assert!(state.b_hat.iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn noiseless_posterior_collapses_onto_observation() {
        // 1x1x1 instance, σ² → 0: b̂ = y exactly.
        let support = full_support(1, 1);
        let priors = Priors::new(1.0, 1.0, 0.0, support).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = init_state(&priors, &BigAmpOptions::default(), 1, &mut rng);
        let y = CMat::from_element(1, 1, Complex64::new(0.8, -0.3));
        iterate(&mut state, &y, &priors, 1.0).unwrap();
        assert!((state.b_hat[(0, 0)] - y[(0, 0)]).norm() < 1e-14);
    }

    #[test]
    fn output_collapse_at_tiny_noise() {
        // σ² = 1e-12: b̂ → y and v^b → 0 across a random instance.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let support = full_support(4, 6);
        let priors = Priors::new(1.0, 1.0, 1e-12, support).unwrap();
        let mut state = init_state(&priors, &BigAmpOptions::default(), 3, &mut rng);
        let y = crandn_mat(3, 6, &mut rng);
        iterate(&mut state, &y, &priors, 1.0).unwrap();
        for (b, yy) in state.b_hat.iter().zip(y.iter()) {
            assert!((b - yy).norm() < 1e-9);
        }
        assert!(state.v_b.iter().all(|&v| v > 0.0 && v < 1e-10));
    }

    #[test]
    fn plugin_moments_match_direct_sums() {
        // Lines computing v̄^p, p̄, v^p against an independent per-entry loop.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (l, n, t) = (3, 2, 4);
        let support = bernoulli_support(n, t, 0.7, &mut rng);
        let priors = Priors::new(1.3, 0.8, 0.2, support.clone()).unwrap();
        let mut state = init_state(&priors, &BigAmpOptions::default(), l, &mut rng);
        // Random but valid state: nonzero means and positive variances.
        state.z_hat = CMat::from_fn(n, t, |i, j| {
            if support[(i, j)] == 1.0 {
                crandn(&mut rng)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        state.v_z = RMat::from_fn(n, t, |i, j| support[(i, j)] * 0.4);
        state.u_hat = crandn_mat(l, t, &mut rng);

        let g0 = state.g_hat.clone();
        let z0 = state.z_hat.clone();
        let vg0 = state.v_g.clone();
        let vz0 = state.v_z.clone();
        let u0 = state.u_hat.clone();

        let y = crandn_mat(l, t, &mut rng);
        iterate(&mut state, &y, &priors, 1.0).unwrap();

        for i in 0..l {
            for j in 0..t {
                let mut v_p_bar = 0.0;
                let mut p_bar = Complex64::new(0.0, 0.0);
                let mut extra = 0.0;
                for k in 0..n {
                    v_p_bar += g0[(i, k)].norm_sqr() * vz0[(k, j)]
                        + vg0[(i, k)] * z0[(k, j)].norm_sqr();
                    p_bar += g0[(i, k)] * z0[(k, j)];
                    extra += vg0[(i, k)] * vz0[(k, j)];
                }
                assert!((state.v_p_bar[(i, j)] - v_p_bar.max(VAR_FLOOR)).abs() < 1e-12);
                assert!((state.p_bar[(i, j)] - p_bar).norm() < 1e-12);
                assert!((state.v_p[(i, j)] - (v_p_bar + extra).max(VAR_FLOOR)).abs() < 1e-12);
                let p_hat = p_bar - u0[(i, j)] * state.v_p_bar[(i, j)];
                assert!((state.p_hat[(i, j)] - p_hat).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn support_and_variance_invariants_hold_across_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (l, n, t) = (6, 5, 12);
        let support = bernoulli_support(n, t, 0.4, &mut rng);
        let g = crandn_mat(l, n, &mut rng);
        let z = CMat::from_fn(n, t, |i, j| {
            if support[(i, j)] == 1.0 {
                crandn(&mut rng)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let y = &g * &z;
        let priors = Priors::new(1.0, 1.0, 1e-3, support.clone()).unwrap();
        let opts = BigAmpOptions::default();
        let mut state = init_state(&priors, &opts, l, &mut rng);
        for _ in 0..20 {
            iterate(&mut state, &y, &priors, opts.damping).unwrap();
            for i in 0..n {
                for j in 0..t {
                    if support[(i, j)] == 0.0 {
                        assert!(state.z_hat[(i, j)].re.to_bits() == 0);
                        assert!(state.z_hat[(i, j)].im.to_bits() == 0);
                        assert_eq!(state.v_z[(i, j)], 0.0);
                    } else {
                        assert!(state.v_z[(i, j)] > 0.0);
                    }
                }
            }
            assert!(state.v_g.iter().all(|&v| v > 0.0));
            assert!(state.v_p.iter().all(|&v| v > 0.0));
            assert!(state.v_p_bar.iter().all(|&v| v > 0.0));
            assert!(state.v_b.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn zero_observation_returns_prior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let support = full_support(3, 5);
        let priors = Priors::new(1.0, 1.0, 0.2, support).unwrap();
        let y = CMat::zeros(4, 5);
        let result = run(&y, &priors, &BigAmpOptions::default(), &mut rng).unwrap();
        assert!(result.z_hat.iter().all(|z| z.norm() == 0.0));
        let residual = (&y - &result.g_hat * &result.z_hat).norm();
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn scalar_instance_matches_rank_one_fit() {
        // 1×1×K, all-ones support, noiseless: the fixed point reproduces Y,
        // which is its own best rank-one fit.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 12;
        let g = crandn(&mut rng);
        let z = crandn_mat(1, k, &mut rng);
        let y = z.clone() * g;
        let priors = Priors::new(1.0, 1.0, 1e-12, full_support(1, k)).unwrap();
        let result = run(&y, &priors, &BigAmpOptions::default(), &mut rng).unwrap();
        let fit = &result.g_hat * &result.z_hat;
        assert!((&fit - &y).norm() / y.norm() < 1e-3, "rel err {}", (&fit - &y).norm() / y.norm());
    }

    #[test]
    fn recovers_dense_factor_on_easy_instance() {
        // Noiseless, rank-sufficient: L=16, N=8, T=64, λ=0.2, dense Gaussian G.
        // This is the self-consistency oracle for the whole stage.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (l, n, t) = (16, 8, 64);
        let support = bernoulli_support(n, t, 0.2, &mut rng);
        let g = crandn_mat(l, n, &mut rng);
        let z = CMat::from_fn(n, t, |i, j| {
            if support[(i, j)] == 1.0 {
                crandn(&mut rng)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let y = &g * &z;
        let priors = Priors::new(1.0, 1.0, 1e-12, support).unwrap();
        let result = run(&y, &priors, &BigAmpOptions::default(), &mut rng).unwrap();

        let (g_aligned, _) = crate::eval::align_diagonal(&result.g_hat, &g);
        let rel = (&g_aligned - &g).norm() / g.norm();
        assert!(rel < 1e-3, "aligned relative error of G: {rel}");
        assert!(result.converged);
    }

    #[test]
    fn residual_history_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (l, n, t) = (8, 6, 24);
        let support = bernoulli_support(n, t, 0.3, &mut rng);
        let g = crandn_mat(l, n, &mut rng);
        let z = CMat::from_fn(n, t, |i, j| {
            if support[(i, j)] == 1.0 {
                crandn(&mut rng)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mut y = &g * &z;
        for e in y.iter_mut() {
            *e += crandn(&mut rng) * 0.1;
        }
        let priors = Priors::new(1.0, 1.0, 0.01, support).unwrap();
        let opts = BigAmpOptions {
            max_restarts: 5,
            ..Default::default()
        };
        let result = run(&y, &priors, &opts, &mut rng).unwrap();
        for w in result.residual_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn sweeps_never_touch_off_support_entries(seed in 0u64..500, damping in 0.2f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (l, n, t) = (4, 3, 6);
            let support = bernoulli_support(n, t, 0.5, &mut rng);
            let priors = Priors::new(1.0, 1.0, 0.05, support.clone()).unwrap();
            let mut state = init_state(&priors, &BigAmpOptions::default(), l, &mut rng);
            let y = crandn_mat(l, t, &mut rng);
            for _ in 0..5 {
                iterate(&mut state, &y, &priors, damping).unwrap();
            }
            for i in 0..n {
                for j in 0..t {
                    if support[(i, j)] == 0.0 {
                        prop_assert!(state.z_hat[(i, j)] == Complex64::new(0.0, 0.0));
                        prop_assert!(state.v_z[(i, j)] == 0.0);
                    }
                }
            }
        }
    }
}
