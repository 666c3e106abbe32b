//! Convolutional graph layers: ChebNet, GCN, and diffusion convolution.

use super::{gcn_adjacency, transition_matrix};
use crate::gsp::{chebyshev_scalar, chebyshev_signals, SpectralBasis};
use crate::tensor::{concat, Activation, Tensor};
use crate::{Error, Matrix, Result};

fn check_cheb_args(n: usize, thetas: &Tensor, x: &Tensor) -> Result<usize> {
    if thetas.rank() != 1 || thetas.len() == 0 {
        return Err(Error::ShapeMismatch(
            "chebnet coefficients must be a non-empty vector".into(),
        ));
    }
    if thetas.len() > n {
        return Err(Error::InvalidArgument(format!(
            "chebnet order {} exceeds the degree bound {}",
            thetas.len() - 1,
            n - 1
        )));
    }
    if x.shape() != [n] {
        return Err(Error::ShapeMismatch(format!(
            "signal {:?} for a graph of {n} nodes",
            x.shape()
        )));
    }
    Ok(thetas.len() - 1)
}

/// ChebNet filtering in the spectral domain: rescale the spectrum to
/// `[-1, 1]` by `2 lambda / lambda_max - 1`, evaluate the Chebyshev
/// polynomial with coefficients `thetas` on the eigenvalues, and apply the
/// diagonal response. Fails when the spectrum is degenerate
/// (`lambda_max = 0`, the edgeless graph under a Laplacian shift).
pub fn chebnet_spectral(basis: &SpectralBasis, thetas: &Tensor, x: &Tensor) -> Result<Tensor> {
    let n = basis.len();
    let order = check_cheb_args(n, thetas, x)?;
    let lmax = basis.lambda_max();
    if lmax <= 0.0 {
        return Err(Error::Numeric(
            "lambda_max is zero; cannot rescale the spectrum".into(),
        ));
    }
    // columns[k] = V diag(T_k(rescaled lambda)) V^T x, so the output is a
    // linear map of the coefficient vector.
    let xs = basis.gft(x.data())?;
    let mut columns = Matrix::zeros(n, order + 1);
    for (i, &lambda) in basis.eigenvalues.iter().enumerate() {
        let scaled = 2.0 * lambda / lmax - 1.0;
        let t = chebyshev_scalar(scaled, order);
        for (k, tk) in t.iter().enumerate() {
            columns.set(i, k, tk * xs[i]);
        }
    }
    // back to the vertex domain column by column
    let mut vertex = Matrix::zeros(n, order + 1);
    for k in 0..=order {
        let col = basis.igft(&columns.column(k))?;
        for (i, v) in col.iter().enumerate() {
            vertex.set(i, k, *v);
        }
    }
    Tensor::from_matrix(&vertex).matmul(thetas)
}

/// ChebNet filtering in the vertex domain: run the Chebyshev recurrence on
/// the rescaled shift `2 S / lambda_max - I` and combine with the
/// coefficients. No eigenvector products are involved, so this is the
/// sharper route for exact-identity checks.
pub fn chebnet_spatial(
    shift: &Matrix,
    lambda_max: f64,
    thetas: &Tensor,
    x: &Tensor,
) -> Result<Tensor> {
    let n = shift.rows();
    let order = check_cheb_args(n, thetas, x)?;
    if lambda_max <= 0.0 {
        return Err(Error::Numeric(
            "lambda_max is zero; cannot rescale the shift".into(),
        ));
    }
    let rescaled = Matrix::from_fn(n, n, |i, j| {
        let v = 2.0 * shift.get(i, j) / lambda_max;
        if i == j {
            v - 1.0
        } else {
            v
        }
    });
    let signals = chebyshev_signals(&rescaled, order, x.data())?;
    let mut columns = Matrix::zeros(n, order + 1);
    for (k, sig) in signals.iter().enumerate() {
        for (i, v) in sig.iter().enumerate() {
            columns.set(i, k, *v);
        }
    }
    Tensor::from_matrix(&columns).matmul(thetas)
}

/// The ChebNet layer: spectral evaluation against the basis, with
/// `lambda_max` read off the computed spectrum.
pub fn chebnet_layer(basis: &SpectralBasis, thetas: &Tensor, x: &Tensor) -> Result<Tensor> {
    chebnet_spectral(basis, thetas, x)
}

/// GCN layer `H = act((I + D^{-1/2} A D^{-1/2}) X Theta)`.
pub fn gcn_layer(
    a: &Matrix,
    x: &Tensor,
    theta: &Tensor,
    activation: Activation,
) -> Result<Tensor> {
    let pre = gcn_pre_activation(a, x, theta)?;
    Ok(activation.apply(&pre))
}

/// The GCN layer before its activation; the ChebNet first-order reduction
/// lands exactly here.
pub fn gcn_pre_activation(a: &Matrix, x: &Tensor, theta: &Tensor) -> Result<Tensor> {
    let a_hat = Tensor::from_matrix(&gcn_adjacency(a)?);
    a_hat.matmul(x)?.matmul(theta)
}

/// How diffusion steps are combined into the final representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionMode {
    /// `[H_1 ... H_K]` with `H_k = act(theta_k (.) (D^{-1}A)^k X)`; each
    /// `theta_k` is a per-feature weight vector broadcast over the nodes.
    Concat,
    /// `sum_{k=0}^{K} act((D^{-1}A)^k X Theta_k)` with matrix weights,
    /// starting from the identity term `k = 0`.
    Sum,
}

/// Diffusion graph convolution over `K` random-walk steps.
///
/// In `Concat` mode `thetas` holds `K` vectors of length `d` (one per step,
/// starting at `k = 1`); in `Sum` mode it holds `K + 1` matrices `d x l`
/// (starting at `k = 0`).
pub fn diffusion_conv(
    a: &Matrix,
    x: &Tensor,
    thetas: &[Tensor],
    mode: DiffusionMode,
    activation: Activation,
) -> Result<Tensor> {
    if thetas.is_empty() {
        return Err(Error::InvalidArgument(
            "diffusion convolution needs at least one weight".into(),
        ));
    }
    let p = Tensor::from_matrix(&transition_matrix(a));
    match mode {
        DiffusionMode::Concat => {
            let mut walked = x.clone();
            let mut parts = Vec::with_capacity(thetas.len());
            for theta in thetas {
                walked = p.matmul(&walked)?; // k = 1, 2, ...
                parts.push(activation.apply(&walked.mul_row_broadcast(theta)?));
            }
            let refs: Vec<&Tensor> = parts.iter().collect();
            concat(&refs, 1)
        }
        DiffusionMode::Sum => {
            let mut walked = x.clone(); // k = 0 term sees X itself
            let mut total = activation.apply(&walked.matmul(&thetas[0])?);
            for theta in &thetas[1..] {
                walked = p.matmul(&walked)?;
                total = total.add(&activation.apply(&walked.matmul(theta)?))?;
            }
            Ok(total)
        }
    }
}
