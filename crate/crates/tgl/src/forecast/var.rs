//! Vector autoregression by stacked least squares.

use super::linfit::linfit;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// Fitted VAR(p) model `y_t = delta + sum_k Phi_k y_{t-k} + eps_t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarModel {
    pub order: usize,
    pub dim: usize,
    pub intercept: Vec<f64>,
    /// Coefficient matrices `Phi_1 .. Phi_p`, each `dim x dim`, stored as
    /// nested rows.
    pub coeffs: Vec<Vec<Vec<f64>>>,
    /// Innovation covariance, `dim x dim`.
    pub noise_cov: Vec<Vec<f64>>,
}

const MIN_DATA_FACTOR: usize = 10;

impl VarModel {
    pub fn coeff_matrix(&self, k: usize) -> Result<Matrix> {
        Matrix::from_rows(&self.coeffs[k])
    }

    pub fn noise_cov_matrix(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.noise_cov)
    }
}

/// Fit a VAR(p) on a `T x m` observation matrix (each row one time step):
/// one least-squares problem per output dimension on a shared lagged
/// design.
pub fn var_fit(observations: &Matrix, order: usize) -> Result<VarModel> {
    let t_len = observations.rows();
    let m = observations.cols();
    if order == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "VAR needs order >= 1 and at least one series".into(),
        ));
    }
    let needed = MIN_DATA_FACTOR * (m * order + 1);
    if t_len < needed {
        return Err(Error::InvalidArgument(format!(
            "VAR({order}) on {m} series needs at least {needed} observations, got {t_len}"
        )));
    }
    let mut rows = Vec::with_capacity(t_len - order);
    for t in order..t_len {
        let mut row = Vec::with_capacity(1 + m * order);
        row.push(1.0);
        for k in 1..=order {
            row.extend_from_slice(observations.row(t - k));
        }
        rows.push(row);
    }
    let design = Matrix::from_rows(&rows)?;

    let mut intercept = vec![0.0; m];
    let mut coeffs = vec![vec![vec![0.0; m]; m]; order];
    let mut residual_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(m); t_len - order];
    for j in 0..m {
        let targets: Vec<f64> = (order..t_len).map(|t| observations.get(t, j)).collect();
        let beta = linfit(&design, &targets)?;
        intercept[j] = beta[0];
        for k in 0..order {
            for i in 0..m {
                coeffs[k][j][i] = beta[1 + k * m + i];
            }
        }
        let fitted = design.matvec(&beta)?;
        for (row, (actual, fit)) in residual_rows.iter_mut().zip(targets.iter().zip(&fitted)) {
            row.push(actual - fit);
        }
    }
    let n_resid = residual_rows.len() as f64;
    let mut noise_cov = vec![vec![0.0; m]; m];
    for row in &residual_rows {
        for a in 0..m {
            for b in 0..m {
                noise_cov[a][b] += row[a] * row[b] / n_resid;
            }
        }
    }
    Ok(VarModel {
        order,
        dim: m,
        intercept,
        coeffs,
        noise_cov,
    })
}

/// Forecast path for horizons `1..=tau`, iterating with zero innovations.
pub fn var_forecast_path(
    model: &VarModel,
    history: &Matrix,
    tau: usize,
) -> Result<Vec<Vec<f64>>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if history.cols() != model.dim || history.rows() < model.order {
        return Err(Error::ShapeMismatch(format!(
            "history {}x{} against VAR({}) on {} series",
            history.rows(),
            history.cols(),
            model.order,
            model.dim
        )));
    }
    let phis: Vec<Matrix> = (0..model.order)
        .map(|k| model.coeff_matrix(k))
        .collect::<Result<_>>()?;
    let mut values: Vec<Vec<f64>> = (0..history.rows()).map(|t| history.row(t).to_vec()).collect();
    let mut out = Vec::with_capacity(tau);
    for _ in 0..tau {
        let t = values.len();
        let mut next = model.intercept.clone();
        for (k, phi) in phis.iter().enumerate() {
            let lag = &values[t - 1 - k];
            let contribution = phi.matvec(lag)?;
            for (n, c) in next.iter_mut().zip(&contribution) {
                *n += c;
            }
        }
        values.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

/// The `tau`-step-ahead forecast alone.
pub fn var_forecast(model: &VarModel, history: &Matrix, tau: usize) -> Result<Vec<f64>> {
    Ok(var_forecast_path(model, history, tau)?
        .pop()
        .expect("tau >= 1 was checked"))
}
