//! Exponential smoothing: the first-order discounted-mean estimator and
//! discounted polynomial fitting for higher orders.

use crate::eig::{pinv_solve_symmetric, symmetric_rank};
use crate::{Error, Matrix, Result};

/// First-order exponentially smoothed level estimate
/// `(1 - theta) * sum_t theta^(T-t) y_t` with `t = 1..T`. The geometric
/// weights sum to `1 - theta^T` after scaling, so a constant series `c`
/// estimates `c (1 - theta^T)`.
pub fn exp_smooth_estimate(y: &[f64], theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) || theta == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "discount factor must lie in (0, 1), got {theta}"
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    let t_len = y.len();
    let weighted: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &v)| theta.powi((t_len - 1 - i) as i32) * v)
        .sum();
    Ok((1.0 - theta) * weighted)
}

/// Discounted polynomial fit of order `n`: weighted least squares on the
/// basis `t^k / k!` (`t = 1..T`) with weights `theta^(T-t)`. As `theta`
/// approaches one this converges to the ordinary polynomial fit.
pub fn discounted_polyfit(y: &[f64], theta: f64, order: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&theta) || theta == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "discount factor must lie in (0, 1], got {theta}"
        )));
    }
    let t_len = y.len();
    if t_len < order + 1 {
        return Err(Error::InvalidArgument(format!(
            "{t_len} observations cannot identify a degree-{order} model"
        )));
    }
    let factorial = |k: usize| -> f64 { (1..=k).map(|v| v as f64).product::<f64>().max(1.0) };
    let basis = Matrix::from_fn(t_len, order + 1, |i, k| {
        let t = (i + 1) as f64;
        t.powi(k as i32) / factorial(k)
    });
    let weights: Vec<f64> = (0..t_len)
        .map(|i| theta.powi((t_len - 1 - i) as i32))
        .collect();
    // weighted normal equations: B^T W B w = B^T W y
    let bw = Matrix::from_fn(order + 1, t_len, |k, i| basis.get(i, k) * weights[i]);
    let gram = bw.matmul(&basis)?;
    if symmetric_rank(&gram)? < order + 1 {
        return Err(Error::Singular(
            "discounted polynomial basis is rank deficient".into(),
        ));
    }
    let moment = bw.matvec(y)?;
    pinv_solve_symmetric(&gram, &moment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_series_closed_form() {
        let c = 2.5;
        let y = vec![c; 12];
        let theta = 0.8;
        let got = exp_smooth_estimate(&y, theta).unwrap();
        assert_abs_diff_eq!(got, c * (1.0 - theta.powi(12)), epsilon = 1e-12);
    }

    #[test]
    fn vanishing_discount_keeps_only_the_last_sample() {
        let y = vec![5.0, -3.0, 7.0];
        let got = exp_smooth_estimate(&y, 1e-9).unwrap();
        assert_abs_diff_eq!(got, 7.0, epsilon = 1e-6);
    }

    #[test]
    fn single_observation() {
        let got = exp_smooth_estimate(&[4.0], 0.3).unwrap();
        assert_abs_diff_eq!(got, (1.0 - 0.3) * 4.0, epsilon = 1e-12);
    }

    #[test]
    fn estimator_is_linear_and_weights_geometric() {
        let theta = 0.7;
        let y1 = vec![1.0, 2.0, 3.0, 4.0];
        let y2 = vec![0.5, -1.0, 2.0, 0.0];
        let lhs = exp_smooth_estimate(
            &y1.iter().zip(&y2).map(|(a, b)| a + b).collect::<Vec<_>>(),
            theta,
        )
        .unwrap();
        let rhs =
            exp_smooth_estimate(&y1, theta).unwrap() + exp_smooth_estimate(&y2, theta).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);

        // unit impulses expose the weights directly
        let mut weights = Vec::new();
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            weights.push(exp_smooth_estimate(&e, theta).unwrap());
        }
        for pair in weights.windows(2) {
            assert_abs_diff_eq!(pair[1] / pair[0], 1.0 / theta, epsilon = 1e-12);
        }
        let total: f64 = weights.iter().sum();
        assert_abs_diff_eq!(total, 1.0 - theta.powi(4), epsilon = 1e-12);
    }

    #[test]
    fn discount_out_of_range_rejected() {
        assert!(exp_smooth_estimate(&[1.0], 0.0).is_err());
        assert!(exp_smooth_estimate(&[1.0], 1.0).is_err());
        assert!(exp_smooth_estimate(&[1.0], -0.2).is_err());
    }

    #[test]
    fn polyfit_recovers_noise_free_linear_series() {
        // y_t = w0 + w1 t with the t^k/k! basis: coefficients map directly
        let (w0, w1) = (1.5, -0.75);
        let y: Vec<f64> = (1..=20).map(|t| w0 + w1 * t as f64).collect();
        let w = discounted_polyfit(&y, 0.9, 1).unwrap();
        assert_abs_diff_eq!(w[0], w0, epsilon = 1e-8);
        assert_abs_diff_eq!(w[1], w1, epsilon = 1e-8);
    }

    #[test]
    fn order_zero_is_a_discounted_mean() {
        let y = vec![2.0, 4.0, 8.0];
        let theta = 0.6f64;
        let w = discounted_polyfit(&y, theta, 0).unwrap();
        let weights: Vec<f64> = (0..3).map(|i| theta.powi(2 - i)).collect();
        let want =
            weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / weights.iter().sum::<f64>();
        assert_abs_diff_eq!(w[0], want, epsilon = 1e-10);
    }

    #[test]
    fn full_discount_limit_matches_unweighted_fit() {
        let y: Vec<f64> = (1..=15)
            .map(|t| 0.3 + 0.2 * t as f64 + 0.05 * (t * t) as f64)
            .collect();
        let near_one = discounted_polyfit(&y, 1.0 - 1e-9, 2).unwrap();
        let exact = discounted_polyfit(&y, 1.0, 2).unwrap();
        for (a, b) in near_one.iter().zip(&exact) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(discounted_polyfit(&[1.0, 2.0], 0.9, 2).is_err());
    }
}
