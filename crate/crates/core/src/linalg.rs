//! Thin helpers over `nalgebra` for the complex Hermitian algebra used by the
//! bounds and estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub type CCholesky = Cholesky<Complex64, Dyn>;

/// Cholesky factorisation of a Hermitian positive-definite matrix.
///
/// Rank deficiency is reported, never papered over with a pseudo-inverse.
pub fn cholesky(m: CMat, what: &str) -> Result<CCholesky> {
    try_cholesky(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Complex square roots always exist, so `nalgebra` accepts indefinite
/// complex input; a valid factor has a real positive diagonal.
pub fn try_cholesky(m: CMat) -> Option<CCholesky> {
    let chol = Cholesky::new(m)?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-8 * d.re
    });
    ok.then_some(chol)
}

pub fn real_cholesky(m: RMat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// Inverse of a lower-triangular matrix with nonzero diagonal.
pub fn lower_triangular_inverse(l: &CMat) -> CMat {
    let n = l.nrows();
    let mut inv = CMat::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = l[(j, j)].inv();
        for i in j + 1..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in j..i {
                acc += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -acc / l[(i, i)];
        }
    }
    inv
}

/// Replace `m` by `(m + m^H) / 2`.
pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in 0..i {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `x^H y`.
pub fn inner(x: &CVec, y: &CVec) -> Complex64 {
    x.dotc(y)
}

/// Real-valued representation `[[Re, -Im], [Im, Re]]` of a complex matrix.
pub fn realify(m: &CMat) -> RMat {
    let (r, c) = m.shape();
    RMat::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Stacked `[Re(v); Im(v)]`.
pub fn realify_vec(v: &CVec) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}
