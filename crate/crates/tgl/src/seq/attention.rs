//! Scaled dot-product attention, multi-head attention, and sinusoidal
//! positional encoding.

use crate::optim::{glorot, ParamSet, ParamView};
use crate::tensor::{concat, Tensor};
use crate::{Error, Matrix, Result};
use rand_chacha::ChaCha8Rng;

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`.
///
/// The attention weights are row-stochastic, so each output row is a convex
/// combination of the value rows.
pub fn sdpa(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let ([_, dq], [tk, dk], [tv, _]) = (q.shape(), k.shape(), v.shape()) else {
        return Err(Error::ShapeMismatch(
            "sdpa expects rank-2 query, key and value".into(),
        ));
    };
    if dq != dk {
        return Err(Error::ShapeMismatch(format!(
            "query width {dq} vs key width {dk}"
        )));
    }
    if tk != tv {
        return Err(Error::ShapeMismatch(format!(
            "{tk} keys against {tv} value rows"
        )));
    }
    let scale = 1.0 / (*dk as f64).sqrt();
    let scores = q.matmul(&k.transpose()?)?.scale(scale);
    scores.softmax(1)?.matmul(v)
}

/// The attention weight matrix alone (handy for invariants and tests).
pub fn sdpa_weights(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let dk = k.shape()[1] as f64;
    q.matmul(&k.transpose()?)?.scale(1.0 / dk.sqrt()).softmax(1)
}

/// Multi-head attention: per-head projections, SDPA per head, then a
/// learned output mix of the concatenated heads.
#[derive(Debug, Clone)]
pub struct MhaLayer {
    prefix: String,
    pub model_dim: usize,
    pub heads: usize,
}

impl MhaLayer {
    pub fn new(prefix: impl Into<String>, model_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || model_dim % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model dim {model_dim} not divisible by {heads} heads"
            )));
        }
        Ok(MhaLayer {
            prefix: prefix.into(),
            model_dim,
            heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        let hd = self.head_dim();
        for j in 0..self.heads {
            for which in ["q", "k", "v"] {
                params.insert(
                    self.name(&format!("{which}{j}")),
                    glorot(rng, self.model_dim, hd),
                );
            }
        }
        params.insert(self.name("o"), glorot(rng, self.model_dim, self.model_dim));
    }

    pub fn forward<P: ParamView>(
        &self,
        p: &P,
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
    ) -> Result<Tensor> {
        let mut heads = Vec::with_capacity(self.heads);
        for j in 0..self.heads {
            let qj = q.matmul(p.param(&self.name(&format!("q{j}"))))?;
            let kj = k.matmul(p.param(&self.name(&format!("k{j}"))))?;
            let vj = v.matmul(p.param(&self.name(&format!("v{j}"))))?;
            heads.push(sdpa(&qj, &kj, &vj)?);
        }
        let refs: Vec<&Tensor> = heads.iter().collect();
        concat(&refs, 1)?.matmul(p.param(&self.name("o")))
    }
}

/// Sinusoidal positional encoding: row `t` holds `sin(t / 10000^(2i/dim))`
/// and `cos(t / 10000^(2i/dim))` in alternating columns. All entries lie in
/// `[-1, 1]` and rows are pairwise distinct for any horizon this crate
/// touches.
pub fn positional_encoding(t_len: usize, dim: usize) -> Result<Matrix> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "positional encoding needs a positive even dimension, got {dim}"
        )));
    }
    Ok(Matrix::from_fn(t_len, dim, |t, j| {
        let i = j / 2;
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        let angle = t as f64 * freq;
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }))
}
