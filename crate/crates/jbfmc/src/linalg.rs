//! Small shared helpers on top of `nalgebra` dense matrices.

use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix, the carrier type for all channels and observations.
pub type CMat = DMatrix<Complex64>;
/// Dense complex vector.
pub type CVec = DVector<Complex64>;
/// Dense real matrix (variances, masks).
pub type RMat = DMatrix<f64>;

pub type Svd = nalgebra::SVD<Complex64, Dyn, Dyn>;

/// One sample from the standard circularly-symmetric complex Gaussian CN(0, 1).
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn crandn_mat<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| crandn(rng))
}

/// SVD with `u` and `v_t`, surfacing convergence failure as an error.
pub fn svd_checked(m: &CMat) -> Result<Svd> {
    m.clone()
        .try_svd(true, true, f64::EPSILON, 4096)
        .ok_or(Error::SvdFailure)
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numerical_rank(m: &CMat, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// True when every entry has finite real and imaginary parts.
pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

/// True when every entry is finite.
pub fn all_finite_real(m: &RMat) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn crandn_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean_sq: f64 = (0..n).map(|_| crandn(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean_sq - 1.0).abs() < 0.02, "E|z|^2 = {mean_sq}");
    }

    #[test]
    fn numerical_rank_of_outer_product_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = crandn_mat(6, 1, &mut rng);
        let b = crandn_mat(1, 5, &mut rng);
        let m = &a * &b;
        assert_eq!(numerical_rank(&m, 1e-10), 1);
        assert_eq!(numerical_rank(&CMat::zeros(4, 4), 1e-10), 0);
    }

    #[test]
    fn svd_checked_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = crandn_mat(7, 5, &mut rng);
        let svd = svd_checked(&m).unwrap();
        let rec = svd.recompose().unwrap();
        assert!((&m - &rec).norm() / m.norm() < 1e-12);
    }
}
