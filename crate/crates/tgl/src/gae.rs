//! Variational machinery and a graph autoencoder.
//!
//! The encoder runs two GCN layers, mean-pools the node states and projects
//! to a diagonal Gaussian over the latent space; the decoder is a
//! perceptron from the latent code to edge-existence logits plus
//! node-feature reconstructions over a fixed maximum node count (smaller
//! graphs are zero-padded; no permutation matching is attempted). The loss
//! is Bernoulli cross-entropy on the adjacency, squared error on the
//! features, and the closed-form KL against a standard-normal prior.

use crate::gnn::gcn_layer;
use crate::optim::{glorot, ParamSet, ParamView};
use crate::seq::GruCell;
use crate::tensor::{Activation, Tensor};
use crate::{Error, GraphSnapshot, Matrix, Result, TemporalGraph};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draw a seeded standard-normal vector.
pub fn standard_normal(len: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::vector(&(0..len).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>())
}

/// Reparameterised sample `z = mu + exp(log_var / 2) (.) eps`.
///
/// The noise is exogenous, so the sample stays differentiable in both the
/// mean and the log-variance. A log-variance pushed towards negative
/// infinity underflows `exp` to zero and the sample collapses onto the
/// mean.
pub fn reparameterize(mu: &Tensor, log_var: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if mu.shape() != log_var.shape() || mu.shape() != eps.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mu {:?}, log_var {:?}, eps {:?}",
            mu.shape(),
            log_var.shape(),
            eps.shape()
        )));
    }
    let sigma = log_var.scale(0.5).exp();
    mu.add(&sigma.hadamard(eps)?)
}

/// Closed-form KL divergence from `N(mu, diag(exp(log_var)))` to `N(0, I)`:
/// `0.5 * sum(exp(log_var) + mu^2 - 1 - log_var)`. Non-negative, zero
/// exactly at the prior.
pub fn kl_diag_gaussian(mu: &Tensor, log_var: &Tensor) -> Result<Tensor> {
    if mu.shape() != log_var.shape() {
        return Err(Error::ShapeMismatch(format!(
            "mu {:?} vs log_var {:?}",
            mu.shape(),
            log_var.shape()
        )));
    }
    let var = log_var.exp();
    let term = var
        .add(&mu.hadamard(mu)?)?
        .add_scalar(-1.0)
        .sub(log_var)?;
    Ok(term.sum().scale(0.5))
}

/// Bernoulli cross-entropy against 0/1 targets, from logits, summed:
/// `sum(softplus(logit) - target * logit)`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.shape() != targets.shape() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    Ok(logits.softplus().sub(&logits.hadamard(targets)?)?.sum())
}

/// Sum of squared differences.
pub fn sum_squared_error(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let diff = a.sub(b)?;
    diff.dot(&diff)
}

/// Graph autoencoder over graphs with at most `n_max` nodes and a fixed
/// feature width.
#[derive(Debug, Clone)]
pub struct GaeModel {
    pub n_max: usize,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
}

impl GaeModel {
    pub fn new(n_max: usize, feature_dim: usize, hidden_dim: usize, latent_dim: usize) -> Self {
        GaeModel {
            n_max,
            feature_dim,
            hidden_dim,
            latent_dim,
        }
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        params.insert("gae.enc1", glorot(rng, self.feature_dim, self.hidden_dim));
        params.insert("gae.enc2", glorot(rng, self.hidden_dim, self.hidden_dim));
        params.insert("gae.w_mu", glorot(rng, self.hidden_dim, self.latent_dim));
        params.insert("gae.b_mu", Tensor::zeros(&[self.latent_dim]));
        params.insert("gae.w_logvar", glorot(rng, self.hidden_dim, self.latent_dim));
        params.insert("gae.b_logvar", Tensor::zeros(&[self.latent_dim]));
        let out_dim = self.n_max * self.n_max + self.n_max * self.feature_dim;
        params.insert("gae.dec_w1", glorot(rng, self.latent_dim, self.hidden_dim));
        params.insert("gae.dec_b1", Tensor::zeros(&[self.hidden_dim]));
        params.insert("gae.dec_w2", glorot(rng, self.hidden_dim, out_dim));
        params.insert("gae.dec_b2", Tensor::zeros(&[out_dim]));
    }

    fn check_graph(&self, g: &GraphSnapshot) -> Result<()> {
        if g.num_nodes() > self.n_max {
            return Err(Error::InvalidArgument(format!(
                "snapshot has {} nodes, model caps at {}",
                g.num_nodes(),
                self.n_max
            )));
        }
        Ok(())
    }

    fn features_of(&self, g: &GraphSnapshot) -> Result<Tensor> {
        let n = g.num_nodes();
        let mut x = Matrix::zeros(n, self.feature_dim);
        if let Some(feat) = g.node_features() {
            if feat.cols() != self.feature_dim {
                return Err(Error::ShapeMismatch(format!(
                    "snapshot features have width {}, model expects {}",
                    feat.cols(),
                    self.feature_dim
                )));
            }
            x = feat.clone();
        }
        Ok(Tensor::from_matrix(&x))
    }

    /// Variational posterior parameters `(mu, log_var)` for one snapshot.
    /// Mean pooling over node states keeps the encoding invariant to node
    /// relabelling.
    pub fn encode<P: ParamView>(&self, p: &P, g: &GraphSnapshot) -> Result<(Tensor, Tensor)> {
        self.check_graph(g)?;
        let a = g.adjacency(false, 0)?;
        let x = self.features_of(g)?;
        let h1 = gcn_layer(&a, &x, p.param("gae.enc1"), Activation::Tanh)?;
        let h2 = gcn_layer(&a, &h1, p.param("gae.enc2"), Activation::Tanh)?;
        let pooled = h2.sum_axis(0)?.scale(1.0 / g.num_nodes().max(1) as f64);
        let mu = pooled
            .matmul(p.param("gae.w_mu"))?
            .add(p.param("gae.b_mu"))?;
        let log_var = pooled
            .matmul(p.param("gae.w_logvar"))?
            .add(p.param("gae.b_logvar"))?;
        Ok((mu, log_var))
    }

    /// Decode a latent code into `(edge logits n_max x n_max, feature
    /// reconstruction n_max x d)`.
    pub fn decode<P: ParamView>(&self, p: &P, z: &Tensor) -> Result<(Tensor, Tensor)> {
        if z.shape() != [self.latent_dim] {
            return Err(Error::ShapeMismatch(format!(
                "latent code {:?} against latent dim {}",
                z.shape(),
                self.latent_dim
            )));
        }
        let hidden = z
            .matmul(p.param("gae.dec_w1"))?
            .add(p.param("gae.dec_b1"))?
            .tanh();
        let flat = hidden
            .matmul(p.param("gae.dec_w2"))?
            .add(p.param("gae.dec_b2"))?;
        let edge_count = self.n_max * self.n_max;
        let edge_logits = flat
            .gather(&(0..edge_count).collect::<Vec<_>>())?
            .reshape(&[self.n_max, self.n_max])?;
        let x_rec = flat
            .gather(&(edge_count..flat.len()).collect::<Vec<_>>())?
            .reshape(&[self.n_max, self.feature_dim])?;
        Ok((edge_logits, x_rec))
    }

    /// Adjacency and features of a snapshot zero-padded to `n_max`.
    pub fn padded_targets(&self, g: &GraphSnapshot) -> Result<(Tensor, Tensor)> {
        self.check_graph(g)?;
        let a = g.adjacency(false, 0)?;
        let mut a_pad = Matrix::zeros(self.n_max, self.n_max);
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                a_pad.set(i, j, a.get(i, j));
            }
        }
        let x = self.features_of(g)?;
        let mut x_pad = Matrix::zeros(self.n_max, self.feature_dim);
        for i in 0..g.num_nodes() {
            for j in 0..self.feature_dim {
                x_pad.set(i, j, x.data()[i * self.feature_dim + j]);
            }
        }
        Ok((Tensor::from_matrix(&a_pad), Tensor::from_matrix(&x_pad)))
    }

    /// Reconstruction part of the objective at a given latent code.
    pub fn reconstruction_loss<P: ParamView>(
        &self,
        p: &P,
        g: &GraphSnapshot,
        z: &Tensor,
    ) -> Result<Tensor> {
        let (edge_logits, x_rec) = self.decode(p, z)?;
        let (a_target, x_target) = self.padded_targets(g)?;
        let edge_term = bce_with_logits(&edge_logits, &a_target)?;
        let feature_term = sum_squared_error(&x_rec, &x_target)?;
        edge_term.add(&feature_term)
    }

    /// Single-sample variational objective: reconstruction at a
    /// reparameterised sample plus the closed-form KL.
    pub fn loss<P: ParamView>(&self, p: &P, g: &GraphSnapshot, eps_seed: u64) -> Result<Tensor> {
        let (mu, log_var) = self.encode(p, g)?;
        let eps = standard_normal(self.latent_dim, eps_seed);
        let z = reparameterize(&mu, &log_var, &eps)?;
        let recon = self.reconstruction_loss(p, g, &z)?;
        recon.add(&kl_diag_gaussian(&mu, &log_var)?)
    }

    /// Deterministic embedding: the posterior mean. The latent width must
    /// respect the information bound `|V|(d+1) + |E|(c+2)` of the snapshot.
    pub fn embed_graph<P: ParamView>(&self, p: &P, g: &GraphSnapshot) -> Result<Vec<f64>> {
        let bound = embedding_bound(g);
        if self.latent_dim > bound {
            return Err(Error::InvalidArgument(format!(
                "latent width {} exceeds the snapshot information bound {bound}",
                self.latent_dim
            )));
        }
        let (mu, _) = self.encode(p, g)?;
        Ok(mu.data().to_vec())
    }

    /// Embed a whole snapshot sequence by driving a GRU over the
    /// per-snapshot posterior means; the final hidden state is the code.
    pub fn embed_sequence<P: ParamView>(
        &self,
        p: &P,
        gru: &GruCell,
        tg: &TemporalGraph,
    ) -> Result<Vec<f64>> {
        if tg.is_empty() {
            return Err(Error::InvalidArgument("empty temporal graph".into()));
        }
        let bound: usize = tg.snapshots().iter().map(embedding_bound).sum();
        if self.latent_dim > bound {
            return Err(Error::InvalidArgument(format!(
                "latent width {} exceeds the sequence information bound {bound}",
                self.latent_dim
            )));
        }
        let mut h = Tensor::zeros(&[1, gru.hidden_dim]);
        for snap in tg.snapshots() {
            let (mu, _) = self.encode(p, snap)?;
            let x = mu.reshape(&[1, self.latent_dim])?;
            h = gru.forward(p, &h, &x)?;
        }
        Ok(h.data().to_vec())
    }
}

/// Information bound on a lossless embedding width for one snapshot:
/// `|V| (d + 1) + |E| (c + 2)`.
pub fn embedding_bound(g: &GraphSnapshot) -> usize {
    let d = g.node_features().map_or(0, Matrix::cols);
    let c = g.edge_features().map_or(0, Matrix::cols);
    g.num_nodes() * (d + 1) + g.num_edges() * (c + 2)
}
