//! Message-passing layers: MPNN with learnable message/update functions,
//! GIN, and single-head graph attention.

use super::{neighbor_indices, sample_indices, Mlp};
use crate::optim::ParamView;
use crate::tensor::{concat_cols, concat_rows, Tensor};
use crate::{Error, Matrix, Result};

/// Cap on aggregated neighbours, sampled deterministically per node.
#[derive(Debug, Clone, Copy)]
pub struct NeighborCap {
    pub q: usize,
    pub seed: u64,
}

fn check_states(a: &Matrix, h: &Tensor) -> Result<(usize, usize)> {
    let [n, l] = h.shape() else {
        return Err(Error::ShapeMismatch(format!(
            "node states must be rank 2, got {:?}",
            h.shape()
        )));
    };
    if a.rows() != *n || a.cols() != *n {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} adjacency against {} node states",
            a.rows(),
            a.cols(),
            n
        )));
    }
    Ok((*n, *l))
}

/// Build the node-by-pair aggregation matrix: entry `(v, e) = 1` when pair
/// `e` sends its message to node `v`.
fn aggregation_matrix(n: usize, targets: &[usize]) -> Matrix {
    let mut agg = Matrix::zeros(n, targets.len());
    for (e, &v) in targets.iter().enumerate() {
        agg.set(v, e, 1.0);
    }
    agg
}

/// One MPNN exchange: each node sums messages
/// `g([h_v, h_u, A_{v,u}])` over its (optionally sampled) neighbours, then
/// updates through `f([h_v, m_v])`. Nodes without neighbours see a zero
/// message.
pub fn mpnn_step<P: ParamView>(
    a: &Matrix,
    h_prev: &Tensor,
    f: &Mlp,
    g: &Mlp,
    params: &P,
    cap: Option<NeighborCap>,
) -> Result<Tensor> {
    let (n, _l) = check_states(a, h_prev)?;
    let mut src_v = Vec::new();
    let mut src_u = Vec::new();
    let mut weights = Vec::new();
    for v in 0..n {
        for u in sample_indices(&neighbor_indices(a, v), v, cap) {
            src_v.push(v);
            src_u.push(u);
            weights.push(a.get(v, u));
        }
    }
    let messages = if src_v.is_empty() {
        Tensor::zeros(&[n, g.out_dim])
    } else {
        let rows_v = h_prev.select_rows(&src_v)?;
        let rows_u = h_prev.select_rows(&src_u)?;
        let w_col = Tensor::new(vec![weights.len(), 1], weights)?;
        let g_in = concat_cols(&concat_cols(&rows_v, &rows_u)?, &w_col)?;
        let per_pair = g.forward(params, &g_in)?;
        let agg = Tensor::from_matrix(&aggregation_matrix(n, &src_v));
        agg.matmul(&per_pair)?
    };
    f.forward(params, &concat_cols(h_prev, &messages)?)
}

/// One GIN convolution: `mlp((1 + eps) h_v + sum_u h_u)` with a learnable
/// scalar `eps`.
pub fn gin_step<P: ParamView>(
    a: &Matrix,
    h_prev: &Tensor,
    eps: &Tensor,
    mlp: &Mlp,
    params: &P,
    cap: Option<NeighborCap>,
) -> Result<Tensor> {
    let (n, _) = check_states(a, h_prev)?;
    if !eps.is_scalar() {
        return Err(Error::ShapeMismatch(format!(
            "eps must be a scalar, got {:?}",
            eps.shape()
        )));
    }
    let neighbor_sum = match cap {
        None => Tensor::from_matrix(&binarize(a)).matmul(h_prev)?,
        Some(_) => {
            // sampled aggregation goes through an explicit masked adjacency
            let mut masked = Matrix::zeros(n, n);
            for v in 0..n {
                for u in sample_indices(&neighbor_indices(a, v), v, cap) {
                    masked.set(v, u, 1.0);
                }
            }
            Tensor::from_matrix(&masked).matmul(h_prev)?
        }
    };
    let self_term = h_prev.add(&h_prev.scale_by(eps)?)?;
    mlp.forward(params, &self_term.add(&neighbor_sum)?)
}

fn binarize(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| {
        if a.get(i, j) != 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

const GAT_LEAKY_SLOPE: f64 = 0.2;

/// Single-head graph attention. For every node the attention scores over
/// its neighbourhood plus itself come from
/// `LeakyReLU(a^T [Theta h_v, Theta h_u])`, are softmax-normalised, and mix
/// the projected neighbour states; a sigmoid keeps the output bounded.
pub fn gat_layer<P: ParamView>(
    a: &Matrix,
    h_prev: &Tensor,
    theta_name: &str,
    attn_name: &str,
    params: &P,
    cap: Option<NeighborCap>,
) -> Result<Tensor> {
    let (n, _) = check_states(a, h_prev)?;
    let theta = params.param(theta_name);
    let attn = params.param(attn_name);
    let out_dim = *theta
        .shape()
        .get(1)
        .ok_or_else(|| Error::ShapeMismatch("projection must be rank 2".into()))?;
    if attn.shape() != [2 * out_dim] {
        return Err(Error::ShapeMismatch(format!(
            "attention vector {:?} against projected width {out_dim}",
            attn.shape()
        )));
    }
    let z = h_prev.matmul(theta)?; // n x out_dim
    let attn_col = attn.reshape(&[2 * out_dim, 1])?;
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let mut members = sample_indices(&neighbor_indices(a, v), v, cap);
        if !members.contains(&v) {
            members.push(v);
        }
        let k = members.len();
        let z_u = z.select_rows(&members)?;
        let z_v = z.select_rows(&vec![v; k])?;
        let scores = concat_cols(&z_v, &z_u)?
            .matmul(&attn_col)?
            .leaky_relu(GAT_LEAKY_SLOPE)
            .reshape(&[k])?
            .softmax(0)?;
        let mixed = scores.reshape(&[1, k])?.matmul(&z_u)?;
        rows.push(mixed.sigmoid());
    }
    let refs: Vec<&Tensor> = rows.iter().collect();
    concat_rows(&refs)
}

/// Attention weights of one node's neighbourhood (plus itself), in the
/// order `[neighbours..., v]`; exposed for the stochasticity invariants.
pub fn gat_attention_weights<P: ParamView>(
    a: &Matrix,
    h_prev: &Tensor,
    theta_name: &str,
    attn_name: &str,
    params: &P,
    v: usize,
) -> Result<Vec<f64>> {
    let (_, _) = check_states(a, h_prev)?;
    let theta = params.param(theta_name);
    let attn = params.param(attn_name);
    let out_dim = theta.shape()[1];
    let z = h_prev.matmul(theta)?;
    let mut members = neighbor_indices(a, v);
    if !members.contains(&v) {
        members.push(v);
    }
    let k = members.len();
    let z_u = z.select_rows(&members)?;
    let z_v = z.select_rows(&vec![v; k])?;
    let attn_col = attn.reshape(&[2 * out_dim, 1])?;
    let scores = concat_cols(&z_v, &z_u)?
        .matmul(&attn_col)?
        .leaky_relu(GAT_LEAKY_SLOPE)
        .reshape(&[k])?
        .softmax(0)?;
    Ok(scores.data().to_vec())
}
