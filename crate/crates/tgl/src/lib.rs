//! # tgl
//!
//! A from-scratch temporal graph learning toolkit.
//!
//! The crate is organised around a small dense-numerics core and builds up
//! from there:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`matrix`] | Row-major dense matrices, linear solves, matrix powers |
//! | [`eig`] | Cyclic-Jacobi symmetric eigensolver |
//! | [`graph`] | Graph snapshots, temporal graphs, Laplacians, k-hop sets, JSONL wire format |
//! | [`tensor`] | Dense tensors with a reverse-mode autodiff tape |
//! | [`optim`] | Named parameter sets and the Adam update |
//! | [`gsp`] | Graph Fourier transform, polynomial and Chebyshev filters |
//! | [`seq`] | RNN/LSTM/GRU cells, n-D convolution, TCN variants, attention |
//! | [`gnn`] | GCN, ChebNet, diffusion, MPNN, GIN, GAT, gated GNN, graph ESN |
//! | [`gae`] | Variational machinery and a graph autoencoder |
//! | [`tgnn`] | Temporal GNN composition (embedding/model evolution) and task heads |
//! | [`forecast`] | Least squares, exponential smoothing, ARIMA, VAR, Kalman |
//! | [`harness`] | Synthetic generators, task registry, metrics, experiment runner |
//!
//! Everything is `f64`; graphs at the scale this crate targets (tens to a
//! few hundred nodes) never need more than dense storage.

pub mod eig;
pub mod forecast;
pub mod gae;
pub mod gnn;
pub mod gradcheck;
pub mod graph;
pub mod gsp;
pub mod harness;
pub mod matrix;
pub mod optim;
pub mod seq;
pub mod tensor;
pub mod tgnn;

pub use eig::{symmetric_eig, SymEig};
pub use graph::{GraphSnapshot, TemporalGraph};
pub use matrix::Matrix;
pub use tensor::{Tape, Tensor};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:.3e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown node id {0}")]
    UnknownNode(u64),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class used by the CLI: 2 for configuration and
    /// input-format problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::Format(_)
            | Error::UnknownNode(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            Error::ShapeMismatch(_)
            | Error::NotSquare { .. }
            | Error::NotSymmetric(_)
            | Error::NoConvergence(_)
            | Error::Singular(_)
            | Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
