//! Small dense kernels shared by the information-theoretic routines.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Default relative diagonal regularization for [`logdet_psd`].
pub const DEFAULT_JITTER: f64 = 1e-12;

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Log-determinant of a symmetric positive semidefinite matrix.
///
/// Adds `jitter * trace(m) / dim` to the diagonal before a Cholesky
/// factorization. An empty matrix has log-determinant 0.
pub fn logdet_psd(m: &DMatrix<f64>, jitter: f64) -> Result<f64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!("logdet of a {}x{} matrix", n, m.ncols())));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let asym = (m - m.transpose()).amax();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if asym > 1e-10 * scale {
        return Err(Error::DimensionMismatch(format!("matrix asymmetric by {asym:e}")));
    }
    let shift = jitter * m.trace() / n as f64;
    let mut a = m.clone();
    if shift > 0.0 {
        for i in 0..n {
            a[(i, i)] += shift;
        }
    }
    logdet_spd(a)
}

/// Log-determinant through a plain Cholesky factorization, no regularization.
pub fn logdet_spd(m: DMatrix<f64>) -> Result<f64> {
    Ok(cholesky(m)?.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

pub fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite(format!("{n}x{n} factorization failed")))
}
