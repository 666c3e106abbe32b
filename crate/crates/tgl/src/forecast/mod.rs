//! Classical time-series estimation and forecasting: ordinary and
//! discounted least squares, ARIMA and VAR by two-stage least squares,
//! Kalman filtering, and grid-based ML/MAP estimation. These serve both as
//! baselines for the learned models and as interpretable references.

mod arima;
mod kalman;
mod linfit;
mod mlmap;
mod smoothing;
mod var;

pub use arima::{arima_fit, arima_forecast, arima_forecast_path, ArimaModel};
pub use kalman::KalmanModel;
pub use linfit::{design_with_intercept, linfit};
pub use mlmap::{map_estimate, ml_estimate};
pub use smoothing::{discounted_polyfit, exp_smooth_estimate};
pub use var::{var_fit, var_forecast, var_forecast_path, VarModel};

/// Difference a series `d` times.
pub(crate) fn difference(y: &[f64], d: usize) -> Vec<f64> {
    let mut out = y.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::difference;

    #[test]
    fn differencing_removes_polynomial_trends() {
        let y: Vec<f64> = (0..10).map(|t| 3.0 + 2.0 * t as f64).collect();
        let d1 = difference(&y, 1);
        assert!(d1.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        let q: Vec<f64> = (0..10).map(|t| (t * t) as f64).collect();
        let d2 = difference(&q, 2);
        assert!(d2.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }
}
