//! Linear-Gaussian state-space filtering.
//!
//! The predict step pushes the state distribution through the transition
//! (the Chapman-Kolmogorov integral, closed-form for Gaussians); the update
//! step conditions on a new observation through Bayes' rule. The covariance
//! update uses the Joseph form, which keeps `P` symmetric positive
//! semidefinite under roundoff.

use crate::{Error, Matrix, Result};

/// Kalman filter state and model matrices.
#[derive(Debug, Clone)]
pub struct KalmanModel {
    /// State transition, `l x l`.
    pub transition: Matrix,
    /// Observation map, `d x l`.
    pub observation: Matrix,
    /// Process noise covariance, `l x l`.
    pub process_noise: Matrix,
    /// Observation noise covariance, `d x d`.
    pub observation_noise: Matrix,
    /// Current state mean.
    pub state_mean: Vec<f64>,
    /// Current state covariance.
    pub state_cov: Matrix,
}

impl KalmanModel {
    pub fn new(
        transition: Matrix,
        observation: Matrix,
        process_noise: Matrix,
        observation_noise: Matrix,
        initial_mean: Vec<f64>,
        initial_cov: Matrix,
    ) -> Result<Self> {
        let l = transition.rows();
        let d = observation.rows();
        if !transition.is_square()
            || observation.cols() != l
            || process_noise.rows() != l
            || !process_noise.is_square()
            || observation_noise.rows() != d
            || !observation_noise.is_square()
            || initial_mean.len() != l
            || initial_cov.rows() != l
            || !initial_cov.is_square()
        {
            return Err(Error::ShapeMismatch(
                "inconsistent state-space dimensions".into(),
            ));
        }
        Ok(KalmanModel {
            transition,
            observation,
            process_noise,
            observation_noise,
            state_mean: initial_mean,
            state_cov: initial_cov,
        })
    }

    /// Predicted (prior) distribution for the next step:
    /// `m- = F m`, `P- = F P F^T + Q`.
    pub fn predict(&self) -> Result<(Vec<f64>, Matrix)> {
        let mean = self.transition.matvec(&self.state_mean)?;
        let cov = self
            .transition
            .matmul(&self.state_cov)?
            .matmul(&self.transition.transpose())?
            .add(&self.process_noise)?;
        Ok((mean, cov))
    }

    /// Advance the filter state to the predicted distribution.
    pub fn predict_in_place(&mut self) -> Result<()> {
        let (mean, cov) = self.predict()?;
        self.state_mean = mean;
        self.state_cov = cov;
        Ok(())
    }

    /// Condition the current (predicted) state on an observation. Fails if
    /// the innovation covariance `H P H^T + R` is singular.
    pub fn update(&mut self, observation: &[f64]) -> Result<()> {
        let d = self.observation.rows();
        if observation.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "observation of length {} for a {d}-dimensional sensor",
                observation.len()
            )));
        }
        let h = &self.observation;
        let ph_t = self.state_cov.matmul(&h.transpose())?; // l x d
        let innovation_cov = h.matmul(&ph_t)?.add(&self.observation_noise)?; // d x d

        // gain K = P H^T S^{-1}, via columns of S^{-1}
        let s_inv = innovation_cov
            .inverse()
            .map_err(|_| Error::Singular("innovation covariance is singular".into()))?;
        let gain = ph_t.matmul(&s_inv)?; // l x d

        let predicted_obs = h.matvec(&self.state_mean)?;
        let residual: Vec<f64> = observation
            .iter()
            .zip(&predicted_obs)
            .map(|(o, p)| o - p)
            .collect();
        let correction = gain.matvec(&residual)?;
        for (m, c) in self.state_mean.iter_mut().zip(&correction) {
            *m += c;
        }

        // Joseph form: P = (I - K H) P (I - K H)^T + K R K^T
        let l = self.state_cov.rows();
        let i_kh = Matrix::eye(l).sub(&gain.matmul(h)?)?;
        let jp = i_kh.matmul(&self.state_cov)?.matmul(&i_kh.transpose())?;
        let krk = gain
            .matmul(&self.observation_noise)?
            .matmul(&gain.transpose())?;
        let p = jp.add(&krk)?;
        // symmetrize away the last roundoff
        self.state_cov = Matrix::from_fn(l, l, |i, j| 0.5 * (p.get(i, j) + p.get(j, i)));
        Ok(())
    }

    /// One predict-update cycle.
    pub fn step(&mut self, observation: &[f64]) -> Result<()> {
        self.predict_in_place()?;
        self.update(observation)
    }
}
