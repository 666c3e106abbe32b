//! ARIMA estimation by the Hannan-Rissanen two-stage least-squares scheme
//! and recursive conditional-expectation forecasting.
//!
//! The model on the raw series is
//! `y_t = delta + eps_t + sum_{k=1}^{p+d} phi_k y_{t-k} - sum_{k=1}^{q} theta_k eps_{t-k}`
//! (note the minus sign on the moving-average sum, kept as stated; many
//! texts use the plus convention, which flips the sign of every `theta_k`).
//! Estimation runs on the `d`-times differenced series and the AR
//! polynomial is expanded back through `(1 - B)^d`, which is why the model
//! carries `p + d` autoregressive weights.

use super::difference;
use super::linfit::linfit;
use crate::{Error, Matrix, Result};
use serde::{Deserialize, Serialize};

/// Fitted ARIMA(p, d, q) model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// Uncorrelated component `delta`.
    pub intercept: f64,
    /// `phi_1 .. phi_{p+d}` on the undifferenced series.
    pub ar_weights: Vec<f64>,
    /// `theta_1 .. theta_q`, entering the recursion with a minus sign.
    pub ma_weights: Vec<f64>,
    /// Residual variance of the innovations.
    pub noise_variance: f64,
}

/// Minimum observations demanded per fitted coefficient.
const MIN_DATA_FACTOR: usize = 10;

/// Fit an ARIMA(p, d, q) model.
///
/// Stage one fits a long autoregression on the differenced series to proxy
/// the innovations; stage two regresses jointly on lagged values and lagged
/// innovation proxies. Pure AR models (`q = 0`) skip straight to ordinary
/// least squares.
pub fn arima_fit(y: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel> {
    let needed = MIN_DATA_FACTOR * (p + d + q + 1);
    if y.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "ARIMA({p},{d},{q}) needs at least {needed} observations, got {}",
            y.len()
        )));
    }
    let w = difference(y, d);

    // innovations proxy from a long autoregression (only needed when q > 0)
    let residuals = if q == 0 {
        Vec::new()
    } else {
        let m = (p.max(q) + 10).min(w.len() / 4);
        long_ar_residuals(&w, m)?
    };

    let offset = if q == 0 { 0 } else { w.len() - residuals.len() };
    let start = p.max(q) + offset.min(w.len());
    let start = start.min(w.len());
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for t in start..w.len() {
        let mut row = Vec::with_capacity(1 + p + q);
        row.push(1.0);
        for k in 1..=p {
            row.push(w[t - k]);
        }
        for k in 1..=q {
            row.push(residuals[t - k - offset]);
        }
        rows.push(row);
        targets.push(w[t]);
    }
    if rows.len() <= p + q {
        return Err(Error::InvalidArgument(
            "not enough usable rows after lag trimming".into(),
        ));
    }
    let design = Matrix::from_rows(&rows)?;
    let coeffs = linfit(&design, &targets)?;
    let intercept = coeffs[0];
    let phi_diff: Vec<f64> = coeffs[1..=p].to_vec();
    // regression sees +c_k eps_{t-k}; the stored convention subtracts
    let theta: Vec<f64> = coeffs[p + 1..].iter().map(|c| -c).collect();

    let fitted = design.matvec(&coeffs)?;
    let rss: f64 = targets
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let noise_variance = rss / targets.len() as f64;

    Ok(ArimaModel {
        p,
        d,
        q,
        intercept,
        ar_weights: expand_through_differencing(&phi_diff, d),
        ma_weights: theta,
        noise_variance,
    })
}

/// Residuals of an AR(m) fit, aligned to `w[m..]`.
fn long_ar_residuals(w: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        // white-noise proxy: deviations from the mean
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        return Ok(w.iter().map(|v| v - mean).collect());
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for t in m..w.len() {
        let mut row = Vec::with_capacity(1 + m);
        row.push(1.0);
        for k in 1..=m {
            row.push(w[t - k]);
        }
        rows.push(row);
        targets.push(w[t]);
    }
    let design = Matrix::from_rows(&rows)?;
    let coeffs = linfit(&design, &targets)?;
    let fitted = design.matvec(&coeffs)?;
    Ok(targets.iter().zip(&fitted).map(|(a, b)| a - b).collect())
}

/// Multiply the AR polynomial `1 - sum phi_k B^k` by `(1 - B)^d` and read
/// the expanded weights back off. The result drives the recursion on the
/// raw (undifferenced) series.
fn expand_through_differencing(phi: &[f64], d: usize) -> Vec<f64> {
    // polynomial coefficients of 1 - sum phi_k B^k, constant term first
    let mut poly = vec![0.0; phi.len() + 1];
    poly[0] = 1.0;
    for (k, &f) in phi.iter().enumerate() {
        poly[k + 1] = -f;
    }
    for _ in 0..d {
        // multiply by (1 - B)
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c;
        }
        poly = next;
    }
    poly[1..].iter().map(|c| -c).collect()
}

impl ArimaModel {
    /// Number of autoregressive lags on the raw series.
    pub fn raw_order(&self) -> usize {
        self.ar_weights.len()
    }

    /// Innovation estimates over a history, using zero pre-sample values.
    fn residual_history(&self, history: &[f64]) -> Vec<f64> {
        let r = self.raw_order();
        let mut eps = vec![0.0; history.len()];
        for t in 0..history.len() {
            if t < r {
                continue; // pre-sample lags unavailable; keep zero
            }
            let mut pred = self.intercept;
            for (k, phi) in self.ar_weights.iter().enumerate() {
                pred += phi * history[t - 1 - k];
            }
            for (k, theta) in self.ma_weights.iter().enumerate() {
                if t >= k + 1 {
                    pred -= theta * eps[t - 1 - k];
                }
            }
            eps[t] = history[t] - pred;
        }
        eps
    }

    fn check_history(&self, history: &[f64]) -> Result<()> {
        if history.len() < self.raw_order().max(self.q).max(1) {
            return Err(Error::InvalidArgument(format!(
                "history of {} observations is shorter than the model memory",
                history.len()
            )));
        }
        Ok(())
    }
}

/// Forecast path for horizons `1..=tau`: iterate the recursion with every
/// future innovation set to zero (the conditional expectation).
pub fn arima_forecast_path(model: &ArimaModel, history: &[f64], tau: usize) -> Result<Vec<f64>> {
    if tau == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    model.check_history(history)?;
    let eps = model.residual_history(history);
    let mut values = history.to_vec();
    let mut innovations = eps;
    let mut out = Vec::with_capacity(tau);
    for _ in 0..tau {
        let t = values.len();
        let mut pred = model.intercept;
        for (k, phi) in model.ar_weights.iter().enumerate() {
            if t >= k + 1 {
                pred += phi * values[t - 1 - k];
            }
        }
        for (k, theta) in model.ma_weights.iter().enumerate() {
            if t >= k + 1 {
                pred -= theta * innovations[t - 1 - k];
            }
        }
        values.push(pred);
        innovations.push(0.0);
        out.push(pred);
    }
    Ok(out)
}

/// The `tau`-step-ahead forecast alone.
pub fn arima_forecast(model: &ArimaModel, history: &[f64], tau: usize) -> Result<f64> {
    Ok(*arima_forecast_path(model, history, tau)?
        .last()
        .expect("tau >= 1 was checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1_series(phi: f64, sigma: f64, t_len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = vec![0.0f64];
        for _ in 1..t_len {
            let e: f64 = rng.sample(StandardNormal);
            let prev = *y.last().unwrap();
            y.push(phi * prev + sigma * e);
        }
        y
    }

    #[test]
    fn planted_ar1_recovered() {
        let y = ar1_series(0.7, 0.1, 2000, 42);
        let model = arima_fit(&y, 1, 0, 0).unwrap();
        assert!(
            (model.ar_weights[0] - 0.7).abs() < 0.05,
            "phi estimate {}",
            model.ar_weights[0]
        );
        assert!(model.noise_variance > 0.0);
    }

    #[test]
    fn differenced_fit_continues_a_linear_trend() {
        let y: Vec<f64> = (0..60).map(|t| 5.0 + 1.5 * t as f64).collect();
        let model = arima_fit(&y, 0, 1, 0).unwrap();
        // differenced series is the constant slope
        assert_abs_diff_eq!(model.intercept, 1.5, epsilon = 1e-8);
        assert_eq!(model.ar_weights, vec![1.0]);
        let path = arima_forecast_path(&model, &y, 3).unwrap();
        for (j, v) in path.iter().enumerate() {
            let t = 60 + j;
            assert_abs_diff_eq!(*v, 5.0 + 1.5 * t as f64, epsilon = 1e-6);
        }
    }

    #[test]
    fn white_noise_forecasts_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..500)
            .map(|_| 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let model = arima_fit(&y, 0, 0, 0).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert_abs_diff_eq!(model.intercept, mean, epsilon = 1e-8);
        let f = arima_forecast(&model, &y, 4).unwrap();
        assert_abs_diff_eq!(f, mean, epsilon = 1e-8);
    }

    #[test]
    fn ma_component_is_estimated_with_the_stated_sign() {
        // simulate y_t = eps_t - theta eps_{t-1} with theta = 0.6
        let theta = 0.6;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut eps_prev: f64 = rng.sample(StandardNormal);
        let mut y = Vec::with_capacity(4000);
        for _ in 0..4000 {
            let e: f64 = rng.sample(StandardNormal);
            y.push(e - theta * eps_prev);
            eps_prev = e;
        }
        let model = arima_fit(&y, 0, 0, 1).unwrap();
        assert!(
            (model.ma_weights[0] - theta).abs() < 0.08,
            "theta estimate {}",
            model.ma_weights[0]
        );
    }

    #[test]
    fn insufficient_data_rejected() {
        let y = vec![1.0; 15];
        assert!(matches!(
            arima_fit(&y, 1, 0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn expansion_through_differencing() {
        // (1 - 0.5 B)(1 - B) = 1 - 1.5 B + 0.5 B^2
        let phi = expand_through_differencing(&[0.5], 1);
        assert_abs_diff_eq!(phi[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(phi[1], -0.5, epsilon = 1e-12);
        // d = 0 is the identity
        assert_eq!(expand_through_differencing(&[0.3, -0.1], 0), vec![0.3, -0.1]);
    }
}
