//! Task decoder heads mapping node or graph embeddings to predictions,
//! with the matching training losses.

use crate::gae::bce_with_logits;
use crate::optim::{glorot, ParamSet, ParamView};
use crate::tensor::{concat_cols, Tensor};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What the model predicts and how the prediction is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadSpec {
    /// Per-node real outputs, squared-error loss.
    NodeRegression { out_dim: usize },
    /// Per-node class logits, softmax cross-entropy.
    NodeClassification { classes: usize },
    /// Per-edge real outputs from concatenated endpoint embeddings.
    EdgeRegression { out_dim: usize },
    /// Per-edge class logits from concatenated endpoint embeddings.
    EdgeClassification { classes: usize },
    /// Pairwise edge probabilities `sigma(h_u . h_v)`.
    LinkPrediction,
    /// Graph-level class logits from the pooled embedding.
    GraphClassification { classes: usize },
    /// Per-node Gaussian mean and log-variance, scored by the negative
    /// log-likelihood.
    GaussianRegression { out_dim: usize },
}

/// Decoder parameters for one head over embeddings of width `embed_dim`.
#[derive(Debug, Clone)]
pub struct Head {
    pub spec: HeadSpec,
    pub embed_dim: usize,
}

impl Head {
    pub fn new(spec: HeadSpec, embed_dim: usize) -> Self {
        Head { spec, embed_dim }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        let l = self.embed_dim;
        match self.spec {
            HeadSpec::NodeRegression { out_dim } | HeadSpec::GaussianRegression { out_dim } => {
                params.insert("head.w", glorot(rng, l, out_dim));
                params.insert("head.b", Tensor::zeros(&[out_dim]));
                if matches!(self.spec, HeadSpec::GaussianRegression { .. }) {
                    params.insert("head.w_logvar", glorot(rng, l, out_dim));
                    params.insert("head.b_logvar", Tensor::zeros(&[out_dim]));
                }
            }
            HeadSpec::NodeClassification { classes } | HeadSpec::GraphClassification { classes } => {
                params.insert("head.w", glorot(rng, l, classes));
                params.insert("head.b", Tensor::zeros(&[classes]));
            }
            HeadSpec::EdgeRegression { out_dim } => {
                params.insert("head.w", glorot(rng, 2 * l, out_dim));
                params.insert("head.b", Tensor::zeros(&[out_dim]));
            }
            HeadSpec::EdgeClassification { classes } => {
                params.insert("head.w", glorot(rng, 2 * l, classes));
                params.insert("head.b", Tensor::zeros(&[classes]));
            }
            HeadSpec::LinkPrediction => {}
        }
    }

    fn affine<P: ParamView>(&self, p: &P, input: &Tensor) -> Result<Tensor> {
        input
            .matmul(p.param("head.w"))?
            .add_row_broadcast(p.param("head.b"))
    }

    /// Per-node predictions (regression values or class logits).
    pub fn node_output<P: ParamView>(&self, p: &P, h: &Tensor) -> Result<Tensor> {
        match self.spec {
            HeadSpec::NodeRegression { .. } | HeadSpec::NodeClassification { .. } => {
                self.affine(p, h)
            }
            _ => Err(Error::InvalidArgument(
                "head does not produce node outputs".into(),
            )),
        }
    }

    /// Gaussian head: per-node `(mean, log-variance)`.
    pub fn gaussian_output<P: ParamView>(&self, p: &P, h: &Tensor) -> Result<(Tensor, Tensor)> {
        if !matches!(self.spec, HeadSpec::GaussianRegression { .. }) {
            return Err(Error::InvalidArgument("not a Gaussian head".into()));
        }
        let mean = self.affine(p, h)?;
        let log_var = h
            .matmul(p.param("head.w_logvar"))?
            .add_row_broadcast(p.param("head.b_logvar"))?;
        Ok((mean, log_var))
    }

    /// Edge predictions from endpoint embeddings concatenated per edge.
    pub fn edge_output<P: ParamView>(
        &self,
        p: &P,
        h: &Tensor,
        edges: &[(usize, usize)],
    ) -> Result<Tensor> {
        if !matches!(
            self.spec,
            HeadSpec::EdgeRegression { .. } | HeadSpec::EdgeClassification { .. }
        ) {
            return Err(Error::InvalidArgument("not an edge head".into()));
        }
        let us: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let vs: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let joint = concat_cols(&h.select_rows(&us)?, &h.select_rows(&vs)?)?;
        self.affine(p, &joint)
    }

    /// Dense link probabilities `sigma(H H^T)`; symmetric, entries in
    /// `(0, 1)`, and exactly one half at zero embeddings.
    pub fn link_probabilities(&self, h: &Tensor) -> Result<Tensor> {
        Ok(h.matmul(&h.transpose()?)?.sigmoid())
    }

    /// Link logits for selected pairs only (training path).
    pub fn link_logits_for(&self, h: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
        let n = h.shape()[0];
        let scores = h.matmul(&h.transpose()?)?;
        let flat: Vec<usize> = pairs.iter().map(|&(u, v)| u * n + v).collect();
        scores.gather(&flat)
    }

    /// Graph-level logits from a pooled embedding.
    pub fn graph_output<P: ParamView>(&self, p: &P, h_graph: &Tensor) -> Result<Tensor> {
        if !matches!(self.spec, HeadSpec::GraphClassification { .. }) {
            return Err(Error::InvalidArgument("not a graph head".into()));
        }
        h_graph.matmul(p.param("head.w"))?.add(p.param("head.b"))
    }
}

/// Mean squared error between predictions and targets.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let diff = pred.sub(target)?;
    Ok(diff.hadamard(&diff)?.mean())
}

/// Softmax cross-entropy of row logits against integer class labels.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let [n, c] = logits.shape() else {
        return Err(Error::ShapeMismatch("logits must be rank 2".into()));
    };
    let (n, c) = (*n, *c);
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let log_probs = logits.log_softmax(1)?;
    let picked: Vec<usize> = labels.iter().enumerate().map(|(i, &l)| i * c + l).collect();
    Ok(log_probs.gather(&picked)?.mean().neg())
}

/// Binary cross-entropy on link logits against 0/1 pair labels.
pub fn link_bce_loss(logits: &Tensor, labels: &Tensor) -> Result<Tensor> {
    Ok(bce_with_logits(logits, labels)?.scale(1.0 / logits.len().max(1) as f64))
}

/// Gaussian negative log-likelihood, averaged per entry:
/// `0.5 (log(2 pi) + log_var + (x - mean)^2 / var)`.
pub fn gaussian_nll_loss(mean: &Tensor, log_var: &Tensor, target: &Tensor) -> Result<Tensor> {
    let diff = target.sub(mean)?;
    let sq = diff.hadamard(&diff)?;
    let inv_var = log_var.neg().exp();
    let fit = sq.hadamard(&inv_var)?;
    let per_entry = fit
        .add(log_var)?
        .add_scalar((2.0 * std::f64::consts::PI).ln());
    Ok(per_entry.mean().scale(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn link_probabilities_are_symmetric_and_half_at_zero() {
        let head = Head::new(HeadSpec::LinkPrediction, 3);
        let h = Tensor::new(vec![3, 3], vec![0.5, -0.2, 0.8, 0.1, 0.9, -0.4, 0.3, 0.3, 0.3])
            .unwrap();
        let p = head.link_probabilities(&h).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(
                    p.data()[i * 3 + j],
                    p.data()[j * 3 + i],
                    epsilon = 1e-15
                );
                assert!(p.data()[i * 3 + j] > 0.0 && p.data()[i * 3 + j] < 1.0);
            }
        }
        let zero = Tensor::zeros(&[2, 3]);
        let p0 = head.link_probabilities(&zero).unwrap();
        assert!(p0.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gaussian_nll_at_the_target_with_unit_variance() {
        let head = Head::new(HeadSpec::GaussianRegression { out_dim: 2 }, 3);
        let mut params = ParamSet::new();
        head.init_params(&mut params, &mut ChaCha8Rng::seed_from_u64(1));
        let target = Tensor::new(vec![2, 2], vec![0.3, -0.4, 0.7, 0.1]).unwrap();
        let nll = gaussian_nll_loss(&target, &Tensor::zeros(&[2, 2]), &target)
            .unwrap()
            .item()
            .unwrap();
        assert_abs_diff_eq!(
            nll,
            0.5 * (2.0 * std::f64::consts::PI).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cross_entropy_prefers_the_right_class() {
        let confident = Tensor::new(vec![2, 2], vec![10.0, -10.0, -10.0, 10.0]).unwrap();
        let right = cross_entropy_loss(&confident, &[0, 1]).unwrap().item().unwrap();
        let wrong = cross_entropy_loss(&confident, &[1, 0]).unwrap().item().unwrap();
        assert!(right < 1e-6);
        assert!(wrong > 5.0);
    }

    #[test]
    fn edge_head_concatenates_endpoints() {
        let head = Head::new(HeadSpec::EdgeRegression { out_dim: 1 }, 2);
        let mut params = ParamSet::new();
        head.init_params(&mut params, &mut ChaCha8Rng::seed_from_u64(2));
        let h = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = head.edge_output(&params, &h, &[(0, 2), (1, 1)]).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        // recompute the first edge by hand
        let w = params.get("head.w");
        let b = params.get("head.b");
        let want = [1.0, 2.0, 5.0, 6.0]
            .iter()
            .zip(w.data().chunks(1))
            .map(|(x, wc)| x * wc[0])
            .sum::<f64>()
            + b.data()[0];
        assert_abs_diff_eq!(out.data()[0], want, epsilon = 1e-12);
    }

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let a = Tensor::vector(&[1.0, 2.0, 3.0]);
        assert_eq!(mse_loss(&a, &a).unwrap().item().unwrap(), 0.0);
    }
}
