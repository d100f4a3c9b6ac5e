//! Synthetic system model: low-rank channels, pilot signals and noisy
//! observations `Y = G (S ⊙ (H X)) + W`.
//!
//! Channels follow a geometric multipath model: each leg is a superposition of
//! a small number of rank-one terms built from uniform-linear-array steering
//! vectors with uniformly drawn spatial frequencies and CN(0, 1) path gains.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{crandn, crandn_mat, numerical_rank, CMat, CVec};

/// Relative singular-value threshold used for rank checks on random draws.
const RANK_TOL: f64 = 1e-10;

/// Scenario dimensions and statistical parameters.
///
/// Symbols follow the usual conventions: `M` transmit antennas, `N` surface
/// elements, `L` receive antennas, `T` pilot symbols, sparsity `λ`, noise
/// power `σ²`, path counts `K_h`/`K_g` and completion rank `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_bs_antennas: usize,
    pub num_surface_elements: usize,
    pub num_rx_antennas: usize,
    pub pilot_length: usize,
    pub sparsity_level: f64,
    pub noise_power: f64,
    pub num_paths_h: usize,
    pub num_paths_g: usize,
    pub completion_rank: usize,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Small profile sized for laptop-scale Monte-Carlo runs and CI.
    pub fn desk_scale() -> Self {
        Self {
            num_bs_antennas: 16,
            num_surface_elements: 32,
            num_rx_antennas: 16,
            pilot_length: 128,
            sparsity_level: 0.25,
            noise_power: 1e-2,
            num_paths_h: 2,
            num_paths_g: 8,
            completion_rank: 2,
            rng_seed: 1,
        }
    }

    /// Full-size profile matching the published simulation setting.
    pub fn paper_scale() -> Self {
        Self {
            num_bs_antennas: 64,
            num_surface_elements: 70,
            num_rx_antennas: 64,
            pilot_length: 300,
            sparsity_level: 0.2,
            noise_power: 1e-1,
            num_paths_h: 4,
            num_paths_g: 35,
            completion_rank: 35,
            rng_seed: 1,
        }
    }

    /// Check every structural invariant of the configuration.
    ///
    /// `sparsity_level = 0` is accepted (the surface never reflects anything
    /// and trials fail gracefully downstream) even though useful operation
    /// requires `0 < λ ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        let (m, n, l, t) = (
            self.num_bs_antennas,
            self.num_surface_elements,
            self.num_rx_antennas,
            self.pilot_length,
        );
        if m == 0 || n == 0 || l == 0 || t == 0 {
            return Err(Error::Config("all dimensions must be positive".into()));
        }
        if t < m {
            return Err(Error::Config(format!(
                "pilot_length ({t}) must be at least num_bs_antennas ({m}) for pilot inversion"
            )));
        }
        if !(self.sparsity_level >= 0.0 && self.sparsity_level <= 1.0) {
            return Err(Error::Config(format!(
                "sparsity_level must lie in [0, 1], got {}",
                self.sparsity_level
            )));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Config(format!(
                "noise_power must be finite and nonnegative, got {}",
                self.noise_power
            )));
        }
        if self.num_paths_h == 0 || self.num_paths_h >= n.min(m) {
            return Err(Error::Config(format!(
                "num_paths_h ({}) must be in [1, min(N, M)) = [1, {})",
                self.num_paths_h,
                n.min(m)
            )));
        }
        if self.num_paths_g == 0 || self.num_paths_g >= l.min(n) {
            return Err(Error::Config(format!(
                "num_paths_g ({}) must be in [1, min(L, N)) = [1, {})",
                self.num_paths_g,
                l.min(n)
            )));
        }
        if self.completion_rank == 0 || self.completion_rank > n.min(t) {
            return Err(Error::Config(format!(
                "completion_rank ({}) must be in [1, min(N, T)] = [1, {}]",
                self.completion_rank,
                n.min(t)
            )));
        }
        Ok(())
    }

    /// SNR in dB corresponding to the configured noise power.
    pub fn snr_db(&self) -> f64 {
        10.0 * (1.0 / self.noise_power).log10()
    }
}

/// One draw of the two channel legs: `h` is surface-side `N×M`, `g` is
/// receiver-side `L×N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CMat,
    pub g: CMat,
}

/// Known training signals: the surface on/off mask `S` (`N×T`, entries zero or
/// unit modulus) and the transmit pilots `X` (`M×T`, full row rank).
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    pub mask: CMat,
    pub pilots: CMat,
}

/// Received pilot block `Y` plus the ground-truth sparse matrix
/// `Z = S ⊙ (H X)`, retained for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub y: CMat,
    pub ground_truth_z: CMat,
}

/// Steering vector of a half-wavelength uniform linear array.
///
/// Element `m` (1-indexed) is `exp(-jπ(m-1)ω)`, with `ω ∈ (0, 1]` the
/// normalized spatial frequency. Every element has unit modulus.
pub fn steering_vector(num_antennas: usize, omega: f64) -> CVec {
    CVec::from_fn(num_antennas, |m, _| {
        Complex64::from_polar(1.0, -std::f64::consts::PI * m as f64 * omega)
    })
}

/// Uniform draw on the half-open interval (0, 1].
fn angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Sum of `paths` rank-one steering outer products with CN(0, 1) gains.
fn multipath<R: Rng + ?Sized>(rows: usize, cols: usize, paths: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for _ in 0..paths {
        let gain = crandn(rng);
        let left = steering_vector(rows, angle(rng));
        let right = steering_vector(cols, angle(rng));
        m += left * right.adjoint() * gain;
    }
    m
}

/// Draw both channel legs. All angular parameters are i.i.d. uniform on
/// (0, 1] and drawn independently between the two legs.
pub fn draw_channels<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let h = multipath(
        config.num_surface_elements,
        config.num_bs_antennas,
        config.num_paths_h,
        rng,
    );
    let g = multipath(
        config.num_rx_antennas,
        config.num_surface_elements,
        config.num_paths_g,
        rng,
    );
    ChannelRealization { h, g }
}

/// Draw the training signals: Bernoulli(λ) on/off mask with fixed zero phase
/// and CN(0, 1) pilots. The pilots are redrawn until `rank(X) = M`, which is
/// a probability-one event for Gaussian draws.
pub fn draw_pilots<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> PilotSet {
    let mask = CMat::from_fn(config.num_surface_elements, config.pilot_length, |_, _| {
        if rng.random::<f64>() < config.sparsity_level {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let pilots = loop {
        let x = crandn_mat(config.num_bs_antennas, config.pilot_length, rng);
        if numerical_rank(&x, RANK_TOL) == config.num_bs_antennas {
            break x;
        }
    };
    PilotSet { mask, pilots }
}

/// Form `Z = S ⊙ (H X)` and `Y = G Z + W` with `W` i.i.d. CN(0, σ²).
///
/// Entries of `Z` where the mask is off are written as exact zeros.
pub fn synthesize<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    pilots: &PilotSet,
    noise_power: f64,
    rng: &mut R,
) -> Result<Observation> {
    let (n, m) = channels.h.shape();
    let (l, n_g) = channels.g.shape();
    let (n_s, t) = pilots.mask.shape();
    let (m_x, t_x) = pilots.pilots.shape();
    if n != n_g || n != n_s || m != m_x || t != t_x {
        return Err(Error::DimensionMismatch {
            context: "synthesize",
            detail: format!("H {n}x{m}, G {l}x{n_g}, S {n_s}x{t}, X {m_x}x{t_x}"),
        });
    }

    let hx = &channels.h * &pilots.pilots;
    let z = CMat::from_fn(n, t, |i, j| {
        let s = pilots.mask[(i, j)];
        if s == Complex64::new(0.0, 0.0) {
            Complex64::new(0.0, 0.0)
        } else {
            s * hx[(i, j)]
        }
    });

    let noise_scale = noise_power.sqrt();
    let mut y = &channels.g * &z;
    for w in y.iter_mut() {
        *w += crandn(rng) * noise_scale;
    }
    Ok(Observation {
        y,
        ground_truth_z: z,
    })
}
