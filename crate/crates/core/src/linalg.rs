//! Hermitian positive-definite helpers for the log-det integrands.

use nalgebra::{Cholesky, DMatrix, DMatrixView, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance on `|m_ij - conj(m_ji)|` before a matrix is accepted as Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

pub fn identity(n: usize) -> DMatrix<Complex64> {
    DMatrix::identity(n, n)
}

/// `H^H H` for a block view.
pub fn gram(h: &DMatrixView<'_, Complex64>) -> DMatrix<Complex64> {
    h.adjoint() * h
}

pub fn is_hermitian(m: &DMatrix<Complex64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let n = m.nrows();
    (0..n).all(|i| {
        (i..n).all(|j| (m[(i, j)] - m[(j, i)].conj()).norm() <= HERMITIAN_TOLERANCE * scale)
    })
}

fn cholesky(m: &DMatrix<Complex64>) -> Result<Cholesky<Complex64, Dyn>> {
    if !is_hermitian(m) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
    // The complex square root never fails, so an indefinite input shows up as
    // a factor diagonal that is not real and positive.
    let l = chol.l_dirty();
    let real_positive = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-8 * d.re
    });
    if !real_positive {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(chol)
}

/// `log2 det(m)` from the Cholesky factor, summing `log2` of the diagonal so
/// the raw determinant is never formed.
pub fn log2_det_hpd(m: &DMatrix<Complex64>) -> Result<f64> {
    let chol = cholesky(m)?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        acc += d.log2();
    }
    Ok(2.0 * acc)
}

/// Whitening of `rhs` against an HPD matrix `a = L L^H`: returns `W = L^{-1} rhs`
/// together with `log2 det(a)`, so that `rhs^H a^{-1} rhs = W^H W` is formed as an
/// exact Gram product.
pub fn whiten(
    a: &DMatrix<Complex64>,
    rhs: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, f64)> {
    let chol = cholesky(a)?;
    let l = chol.l();
    let logdet = 2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.log2()).sum::<f64>();
    let w = l
        .solve_lower_triangular(rhs)
        .ok_or(Error::NotPositiveDefinite)?;
    Ok((w, logdet))
}

/// Eigenvalues of a Hermitian positive-semidefinite matrix, clamped at zero.
pub fn psd_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    if !is_hermitian(m) {
        return Err(Error::NotPositiveDefinite);
    }
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)].re.max(0.0)]);
    }
    Ok(m.clone()
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0))
        .collect())
}

/// `log2 det(I + scale * M)` from the eigenvalues of `M`.
pub fn log2_det_shifted(eigenvalues: &[f64], scale: f64) -> f64 {
    eigenvalues.iter().map(|l| (scale * l).ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn logdet_2x2_closed_form() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(2.0, 0.0)]);
        // det = 6 - |1 + i|^2 = 4
        assert_abs_diff_eq!(log2_det_hpd(&m).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_non_hermitian_and_indefinite() {
        let m =
            DMatrix::from_row_slice(2, 2, &[c(3.0, 0.0), c(1.0, 1.0), c(1.0, 1.0), c(2.0, 0.0)]);
        assert!(matches!(log2_det_hpd(&m), Err(Error::NotPositiveDefinite)));
        let m =
            DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(log2_det_hpd(&m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn whitening_matches_inverse() {
        let a =
            DMatrix::from_row_slice(2, 2, &[c(4.0, 0.0), c(1.0, -0.5), c(1.0, 0.5), c(3.0, 0.0)]);
        let h = DMatrix::from_row_slice(2, 1, &[c(0.3, 0.2), c(-1.0, 0.7)]);
        let (w, logdet) = whiten(&a, &h).unwrap();
        let direct = h.adjoint() * a.clone().try_inverse().unwrap() * &h;
        let via = w.adjoint() * &w;
        assert_abs_diff_eq!(via[(0, 0)].re, direct[(0, 0)].re, epsilon = 1e-13);
        assert_abs_diff_eq!(logdet, log2_det_hpd(&a).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn eigenvalue_route_matches_cholesky() {
        let h = DMatrix::from_row_slice(
            3,
            2,
            &[
                c(0.3, 0.2),
                c(-1.0, 0.7),
                c(0.1, -0.4),
                c(0.9, 0.0),
                c(-0.2, 0.5),
                c(0.6, 0.6),
            ],
        );
        let g = h.adjoint() * &h;
        let eig = psd_eigenvalues(&g).unwrap();
        for s in [0.1, 1.0, 37.0] {
            let direct = log2_det_hpd(&(identity(2) + g.clone() * c(s, 0.0))).unwrap();
            assert_abs_diff_eq!(log2_det_shifted(&eig, s), direct, epsilon = 1e-12);
        }
    }
}
