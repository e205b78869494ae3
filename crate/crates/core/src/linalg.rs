use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest accepted ratio of singular values of a regressor matrix.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares solution `B` of `Z·B ≈ Y`, rejecting rank-deficient `Z`.
pub fn least_squares(z: &DMatrix<f64>, y: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if z.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: regressors have {} rows, targets {}",
            z.nrows(),
            y.nrows()
        )));
    }
    if z.ncols() == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    if z.nrows() < z.ncols() {
        return Err(Error::Singular(format!("{what}: fewer rows than regressors")));
    }
    let svd = z.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min / max < RANK_TOLERANCE {
        return Err(Error::Singular(format!("{what}: collinear regressors")));
    }
    svd.solve(y, 0.0).map_err(|e| Error::Singular(format!("{what}: {e}")))
}

/// Minimum-norm least-squares solution of `Z·B ≈ Y`. Singular values below
/// [`RANK_TOLERANCE`] times the largest are treated as zero.
pub fn min_norm_least_squares(z: &DMatrix<f64>, y: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if z.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: regressors have {} rows, targets {}",
            z.nrows(),
            y.nrows()
        )));
    }
    if z.ncols() == 0 {
        return Ok(DMatrix::zeros(0, y.ncols()));
    }
    let svd = z.clone().svd(true, true);
    let max = svd.singular_values.max();
    if !(max > 0.0) {
        return Err(Error::Singular(format!("{what}: all regressors are zero")));
    }
    svd.solve(y, RANK_TOLERANCE * max).map_err(|e| Error::Singular(format!("{what}: {e}")))
}
