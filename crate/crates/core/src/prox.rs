//! Proximal operators for the L1 and nuclear norms.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::graph::Matrix;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITERS: usize = 10_000;

#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Entrywise `sign(a) · max(|a| − τ, 0)`.
pub fn soft_threshold(a: &Matrix, tau: f64) -> Matrix {
    a.map(|v| shrink(v, tau))
}

/// Thin SVD with failure mapped to [`Error::Numerical`].
pub fn svd(a: &Matrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    a.clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical(format!("SVD of a {}x{} matrix did not converge", a.nrows(), a.ncols())))
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let sv = a
        .clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("singular value iteration did not converge".into()))?
        .singular_values;
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

pub fn nuclear_norm(a: &Matrix) -> Result<f64> {
    Ok(singular_values(a)?.iter().sum())
}

/// Singular value thresholding: `U · max(Σ − τ, 0) · Vᵀ`.
///
/// Also returns the nuclear norm of the result, which callers tracking an
/// objective would otherwise recompute.
pub fn svt_with_norm(a: &Matrix, tau: f64) -> Result<(Matrix, f64)> {
    let dec = svd(a)?;
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let mut out = Matrix::zeros(a.nrows(), a.ncols());
    let mut norm = 0.0;
    for (k, &s) in dec.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk <= 0.0 {
            continue;
        }
        norm += shrunk;
        out.ger(shrunk, &u.column(k), &v_t.row(k).transpose(), 1.0);
    }
    Ok((out, norm))
}

pub fn svt(a: &Matrix, tau: f64) -> Result<Matrix> {
    svt_with_norm(a, tau).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn soft_threshold_basics() {
        assert_eq!(soft_threshold(&Matrix::from_element(1, 1, 3.0), 1.0)[(0, 0)], 2.0);
        assert_eq!(soft_threshold(&Matrix::from_element(1, 1, -0.5), 1.0)[(0, 0)], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random(3, 4, &mut rng);
        assert_eq!(soft_threshold(&a, 0.0), a);
    }

    #[test]
    fn svt_identity_at_zero_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(5, 7, &mut rng);
        let out = svt(&a, 0.0).unwrap();
        assert!((&out - &a).norm() <= 1e-10 * a.norm());
    }

    #[test]
    fn svt_of_diagonal() {
        let a = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
        let out = svt(&a, 2.0).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn svt_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(5, 7, &mut rng);
        let tau = singular_values(&a).unwrap()[0] / 2.0;
        let z = svt(&a, tau).unwrap();
        let objective = |z: &Matrix| tau * nuclear_norm(z).unwrap() + 0.5 * (z - &a).norm_squared();
        let best = objective(&z);
        for _ in 0..1000 {
            let dz = random(5, 7, &mut rng) * 0.01;
            assert!(best <= objective(&(&z + dz)) + 1e-12);
        }
    }

    #[test]
    fn zero_sized_input() {
        assert!(singular_values(&Matrix::zeros(0, 3)).unwrap().is_empty());
    }
}
