//! Spatial learning layers on static graph snapshots.
//!
//! Convolutional layers (`ChebNet`, GCN, diffusion), message passing (MPNN,
//! GIN, GAT) and recurrent graph networks (gated GNN, graph echo state
//! network, diffusion-to-fixpoint) all take a dense adjacency matrix in the
//! snapshot's node-index space plus tensors whose rows are node states.
//! Every node-level layer is permutation-equivariant and the readout is
//! permutation-invariant; the test suites pin both.

mod conv_layers;
mod message;
mod recurrent;

pub use conv_layers::{
    chebnet_layer, chebnet_spatial, chebnet_spectral, diffusion_conv, gcn_layer, DiffusionMode,
};
pub use message::{gat_attention_weights, gat_layer, gin_step, mpnn_step, NeighborCap};
pub use recurrent::{
    gated_gnn_init, gated_gnn_step, graph_readout, scarselli_fixpoint, scarselli_step,
    FixpointOutcome, GraphEsn,
};

use crate::optim::{glorot, ParamSet, ParamView};
use crate::tensor::Tensor;
use crate::{Matrix, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Augmented normalized adjacency `I + D^{-1/2} A D^{-1/2}` used by the GCN
/// layer; isolated nodes keep a bare identity entry.
pub fn gcn_adjacency(a: &Matrix) -> Result<Matrix> {
    let degrees = a.col_sums();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = a.rows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let norm = inv_sqrt[i] * a.get(i, j) * inv_sqrt[j];
        if i == j {
            1.0 + norm
        } else {
            norm
        }
    }))
}

/// Random-walk transition matrix `D^{-1} A`; rows of zero-degree nodes stay
/// zero. On positive-degree graphs every row sums to one.
pub fn transition_matrix(a: &Matrix) -> Matrix {
    let degrees = a.row_sums();
    let n = a.rows();
    Matrix::from_fn(n, a.cols(), |i, j| {
        if degrees[i] > 0.0 {
            a.get(i, j) / degrees[i]
        } else {
            0.0
        }
    })
}

/// Neighbour indices of node `v` read off row `v` of the adjacency matrix.
pub(crate) fn neighbor_indices(a: &Matrix, v: usize) -> Vec<usize> {
    (0..a.cols()).filter(|&u| a.get(v, u) != 0.0).collect()
}

/// One-hidden-layer perceptron with tanh hidden activation and a linear
/// output, applied row-wise to a batch.
#[derive(Debug, Clone)]
pub struct Mlp {
    prefix: String,
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Mlp {
    pub fn new(
        prefix: impl Into<String>,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Self {
        Mlp {
            prefix: prefix.into(),
            in_dim,
            hidden_dim,
            out_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        params.insert(self.name("w1"), glorot(rng, self.in_dim, self.hidden_dim));
        params.insert(self.name("b1"), Tensor::zeros(&[self.hidden_dim]));
        params.insert(self.name("w2"), glorot(rng, self.hidden_dim, self.out_dim));
        params.insert(self.name("b2"), Tensor::zeros(&[self.out_dim]));
    }

    pub fn forward<P: ParamView>(&self, p: &P, x: &Tensor) -> Result<Tensor> {
        let hidden = x
            .matmul(p.param(&self.name("w1")))?
            .add_row_broadcast(p.param(&self.name("b1")))?
            .tanh();
        hidden
            .matmul(p.param(&self.name("w2")))?
            .add_row_broadcast(p.param(&self.name("b2")))
    }
}

/// Deterministically sample at most `cap.q` of the given neighbour indices.
pub(crate) fn sample_indices(neighbors: &[usize], v: usize, cap: Option<NeighborCap>) -> Vec<usize> {
    match cap {
        Some(c) if neighbors.len() > c.q => {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed.wrapping_add(v as u64));
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, neighbors.len(), c.q)
                .into_iter()
                .map(|i| neighbors[i])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => neighbors.to_vec(),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Apply a node permutation to an adjacency matrix: `PAP^T`.
    pub fn permute_adjacency(a: &Matrix, perm: &[usize]) -> Matrix {
        Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(perm[i], perm[j]))
    }

    /// Permute the rows of a rank-2 tensor.
    pub fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
        t.select_rows(perm).unwrap()
    }

    pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_range(0.0..1.0) < p {
                    a.set(i, j, 1.0);
                    a.set(j, i, 1.0);
                }
            }
        }
        a
    }

    pub fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
        Tensor::new(
            vec![n, d],
            (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            p.swap(i, j);
        }
        p
    }
}
