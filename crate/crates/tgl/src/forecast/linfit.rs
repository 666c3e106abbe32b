//! Ordinary least squares through the normal equations.

use crate::eig::pinv_solve_symmetric;
use crate::{Error, Matrix, Result};

/// Least-squares weights for `X w ~ y`. The normal equations are solved
/// through the symmetric eigendecomposition, falling back to the
/// Moore-Penrose pseudo-inverse when `X^T X` is singular.
pub fn linfit(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    if x.rows() == 0 || y.is_empty() {
        return Err(Error::InvalidArgument("empty regression data".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} design rows against {} responses",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() < x.cols() {
        return Err(Error::InvalidArgument(format!(
            "{} observations cannot identify {} coefficients",
            x.rows(),
            x.cols()
        )));
    }
    let xt = x.transpose();
    let gram = xt.matmul(x)?;
    let moment = xt.matvec(y)?;
    pinv_solve_symmetric(&gram, &moment)
}

/// Stack explanatory rows behind a leading column of ones.
pub fn design_with_intercept(rows: &[Vec<f64>]) -> Result<Matrix> {
    let augmented: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(r.len() + 1);
            row.push(1.0);
            row.extend_from_slice(r);
            row
        })
        .collect();
    Matrix::from_rows(&augmented)
}
