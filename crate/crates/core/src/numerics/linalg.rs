use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `(M + ridge I) x = rhs` with a Cholesky factorization.
pub fn ridge_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if !m.is_square() || m.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch {
            what: "ridge_solve rhs",
            expected: m.nrows(),
            found: rhs.len(),
        });
    }
    let mut k = m.clone();
    for i in 0..k.nrows() {
        k[(i, i)] += ridge;
    }
    let chol = k.cholesky().ok_or(Error::Factorization)?;
    Ok(chol.solve(rhs))
}
