//! Grid-based maximum-likelihood and maximum-a-posteriori estimation.

use crate::{Error, Result};

/// Argmax of a log-likelihood over a finite parameter grid. Ties resolve
/// to the smallest parameter value.
pub fn ml_estimate(grid: &[f64], log_likelihood: impl Fn(f64) -> f64) -> Result<f64> {
    map_estimate(grid, log_likelihood, |_| 0.0)
}

/// Argmax of log-likelihood plus log-prior over a finite grid; a flat
/// prior reduces this to [`ml_estimate`]. Ties resolve to the smallest
/// parameter value.
pub fn map_estimate(
    grid: &[f64],
    log_likelihood: impl Fn(f64) -> f64,
    log_prior: impl Fn(f64) -> f64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = sorted[0];
    let mut best_score = f64::NEG_INFINITY;
    for &theta in &sorted {
        let score = log_likelihood(theta) + log_prior(theta);
        if score > best_score {
            best_score = score;
            best = theta;
        }
    }
    if best_score == f64::NEG_INFINITY {
        return Err(Error::Numeric(
            "objective is negative infinity over the whole grid".into(),
        ));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bernoulli_loglik(heads: u32, tails: u32) -> impl Fn(f64) -> f64 {
        move |theta: f64| {
            if theta <= 0.0 || theta >= 1.0 {
                f64::NEG_INFINITY
            } else {
                heads as f64 * theta.ln() + tails as f64 * (1.0 - theta).ln()
            }
        }
    }

    fn grid_0_1(step: f64) -> Vec<f64> {
        let n = (1.0 / step) as usize;
        (1..n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn bernoulli_ml_matches_closed_form() {
        let grid = grid_0_1(0.001);
        let theta = ml_estimate(&grid, bernoulli_loglik(7, 3)).unwrap();
        assert_abs_diff_eq!(theta, 0.7, epsilon = 1e-9);
    }

    #[test]
    fn beta_prior_shifts_the_mode() {
        // Beta(2,2) prior: posterior mode (7+1)/(10+2) = 2/3
        let grid = grid_0_1(0.001);
        let theta = map_estimate(&grid, bernoulli_loglik(7, 3), |t| {
            t.ln() + (1.0 - t).ln()
        })
        .unwrap();
        assert!((theta - 2.0 / 3.0).abs() <= 0.0005 + 1e-12, "got {theta}");
    }

    #[test]
    fn flat_prior_reduces_map_to_ml() {
        let grid = grid_0_1(0.01);
        let ml = ml_estimate(&grid, bernoulli_loglik(4, 6)).unwrap();
        let map = map_estimate(&grid, bernoulli_loglik(4, 6), |_| -1.234).unwrap();
        assert_eq!(ml, map);
    }

    #[test]
    fn ties_break_towards_the_smallest_parameter() {
        let grid = vec![3.0, 1.0, 2.0];
        let theta = ml_estimate(&grid, |_| 0.5).unwrap();
        assert_eq!(theta, 1.0);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(ml_estimate(&[], |_| 0.0).is_err());
    }
}
