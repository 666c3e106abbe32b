//! Recurrent graph networks: gated GNN, graph echo state network,
//! diffusion-to-fixpoint updates, and the gated graph-level readout.

use super::Mlp;
use crate::optim::ParamView;
use crate::seq::GruCell;
use crate::tensor::{concat_cols, Tensor};
use crate::{symmetric_eig, Error, Matrix, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Initial gated-GNN state: node features padded with zeros to the working
/// width.
pub fn gated_gnn_init(x: &Matrix, width: usize) -> Result<Tensor> {
    if width < x.cols() {
        return Err(Error::InvalidArgument(format!(
            "state width {width} smaller than feature dimension {}",
            x.cols()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), width);
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            out.set(i, j, x.get(i, j));
        }
    }
    Ok(Tensor::from_matrix(&out))
}

/// One gated-GNN iteration: every node feeds the edge-weighted sum of its
/// neighbours' states into a shared GRU.
pub fn gated_gnn_step<P: ParamView>(
    w_edges: &Matrix,
    h_prev: &Tensor,
    gru: &GruCell,
    params: &P,
) -> Result<Tensor> {
    let [n, _] = h_prev.shape() else {
        return Err(Error::ShapeMismatch("node states must be rank 2".into()));
    };
    if w_edges.rows() != *n || w_edges.cols() != *n {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} edge-weight matrix against {n} nodes",
            w_edges.rows(),
            w_edges.cols()
        )));
    }
    let neighbor_sum = Tensor::from_matrix(w_edges).matmul(h_prev)?;
    gru.forward(params, h_prev, &neighbor_sum)
}

/// Fixed random reservoir for the graph echo state network. The recurrent
/// matrix is symmetric with its spectral radius rescaled to `0.9 * scale`,
/// giving contractive dynamics for `scale < 1` on modest-degree graphs.
#[derive(Debug, Clone)]
pub struct GraphEsn {
    pub input_dim: usize,
    pub reservoir_dim: usize,
    w_in: Matrix,     // reservoir_dim x input_dim
    w_rec: Matrix,    // reservoir_dim x reservoir_dim, symmetric
}

impl GraphEsn {
    pub fn new(input_dim: usize, reservoir_dim: usize, scale: f64, seed: u64) -> Result<Self> {
        if scale <= 0.0 {
            return Err(Error::InvalidArgument("reservoir scale must be > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_in = Matrix::from_fn(reservoir_dim, input_dim, |_, _| rng.random_range(-1.0..1.0));
        let mut w_rec = Matrix::zeros(reservoir_dim, reservoir_dim);
        for i in 0..reservoir_dim {
            for j in i..reservoir_dim {
                let v = rng.random_range(-1.0..1.0);
                w_rec.set(i, j, v);
                w_rec.set(j, i, v);
            }
        }
        let radius = symmetric_eig(&w_rec)?
            .values
            .iter()
            .fold(0.0f64, |m, &l| m.max(l.abs()));
        if radius > 0.0 {
            w_rec = w_rec.scale(0.9 * scale / radius);
        }
        Ok(GraphEsn {
            input_dim,
            reservoir_dim,
            w_in,
            w_rec,
        })
    }

    /// One reservoir sweep:
    /// `h_v = tanh(gain_v W_in x_v + sum_u w_{v,u} W_rec h_u)`. The self
    /// gain is the diagonal edge weight when a self-loop exists and 1
    /// otherwise.
    pub fn step(&self, w_edges: &Matrix, x: &Matrix, h_prev: &Matrix) -> Result<Matrix> {
        let n = x.rows();
        if x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input width {} against reservoir input {}",
                x.cols(),
                self.input_dim
            )));
        }
        if h_prev.rows() != n || h_prev.cols() != self.reservoir_dim {
            return Err(Error::ShapeMismatch(format!(
                "state {}x{} against {n} nodes and reservoir {}",
                h_prev.rows(),
                h_prev.cols(),
                self.reservoir_dim
            )));
        }
        let driven = x.matmul(&self.w_in.transpose())?;
        let mixed = w_edges.matmul(h_prev)?.matmul(&self.w_rec.transpose())?;
        Ok(Matrix::from_fn(n, self.reservoir_dim, |i, j| {
            let gain = match w_edges.get(i, i) {
                0.0 => 1.0,
                g => g,
            };
            (gain * driven.get(i, j) + mixed.get(i, j)).tanh()
        }))
    }
}

/// Gated permutation-invariant readout:
/// `tanh(sum_v sigmoid(g_theta([h_v, x_v])) (.) tanh(g_psi([h_v, x_v])))`.
pub fn graph_readout<P: ParamView>(
    h_final: &Tensor,
    x: &Tensor,
    g_theta: &Mlp,
    g_psi: &Mlp,
    params: &P,
) -> Result<Tensor> {
    if h_final.shape().first() != x.shape().first() {
        return Err(Error::ShapeMismatch(format!(
            "states {:?} against features {:?}",
            h_final.shape(),
            x.shape()
        )));
    }
    let joint = concat_cols(h_final, x)?;
    let gate = g_theta.forward(params, &joint)?.sigmoid();
    let content = g_psi.forward(params, &joint)?.tanh();
    Ok(gate.hadamard(&content)?.sum_axis(0)?.tanh())
}

/// One diffusion sweep: every node's state is the sum of a learnable
/// function of each neighbour's features, edge weight and previous state.
pub fn scarselli_step<P: ParamView>(
    a: &Matrix,
    x: &Tensor,
    w_edges: &Matrix,
    h_prev: &Tensor,
    f: &Mlp,
    params: &P,
) -> Result<Tensor> {
    let ([n, l], [xn, d]) = (h_prev.shape(), x.shape()) else {
        return Err(Error::ShapeMismatch("states and features must be rank 2".into()));
    };
    let (n, l, d) = (*n, *l, *d);
    if *xn != n || a.rows() != n || w_edges.rows() != n {
        return Err(Error::ShapeMismatch(
            "adjacency, features and states disagree on the node count".into(),
        ));
    }
    if f.in_dim != 2 * d + 1 + l {
        return Err(Error::ShapeMismatch(format!(
            "update function expects input width {}, node data provides {}",
            f.in_dim,
            2 * d + 1 + l
        )));
    }
    let mut src_v = Vec::new();
    let mut src_u = Vec::new();
    let mut weights = Vec::new();
    for v in 0..n {
        for u in super::neighbor_indices(a, v) {
            src_v.push(v);
            src_u.push(u);
            weights.push(w_edges.get(v, u));
        }
    }
    if src_v.is_empty() {
        return Ok(Tensor::zeros(&[n, f.out_dim]));
    }
    let x_v = x.select_rows(&src_v)?;
    let x_u = x.select_rows(&src_u)?;
    let h_u = h_prev.select_rows(&src_u)?;
    let w_col = Tensor::new(vec![weights.len(), 1], weights)?;
    let pair_in = concat_cols(&concat_cols(&concat_cols(&x_v, &x_u)?, &w_col)?, &h_u)?;
    let per_pair = f.forward(params, &pair_in)?;
    let mut agg = Matrix::zeros(n, src_v.len());
    for (e, &v) in src_v.iter().enumerate() {
        agg.set(v, e, 1.0);
    }
    Tensor::from_matrix(&agg).matmul(&per_pair)
}

/// Result of iterating the diffusion to (approximate) equilibrium.
#[derive(Debug)]
pub struct FixpointOutcome {
    pub h: Tensor,
    pub converged: bool,
    pub iterations: usize,
}

const FIXPOINT_TOL: f64 = 1e-6;
const FIXPOINT_CAP: usize = 100;

/// Iterate [`scarselli_step`] until the max-norm change drops below `1e-6`
/// or 100 sweeps pass; a non-converged run is flagged, not an error, and
/// carries the last iterate.
pub fn scarselli_fixpoint<P: ParamView>(
    a: &Matrix,
    x: &Tensor,
    w_edges: &Matrix,
    h0: &Tensor,
    f: &Mlp,
    params: &P,
) -> Result<FixpointOutcome> {
    let mut h = h0.detach();
    for iteration in 1..=FIXPOINT_CAP {
        let next = scarselli_step(a, x, w_edges, &h, f, params)?.detach();
        let delta = next
            .data()
            .iter()
            .zip(h.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        h = next;
        if delta < FIXPOINT_TOL {
            return Ok(FixpointOutcome {
                h,
                converged: true,
                iterations: iteration,
            });
        }
    }
    Ok(FixpointOutcome {
        h,
        converged: false,
        iterations: FIXPOINT_CAP,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::testutil::*;
    use crate::gradcheck::max_grad_error;
    use crate::optim::ParamSet;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_pads_features() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let h0 = gated_gnn_init(&x, 4).unwrap();
        assert_eq!(h0.shape(), &[2, 4]);
        assert_eq!(h0.data(), &[1.0, 2.0, 0.0, 0.0, 3.0, 4.0, 0.0, 0.0]);
        assert!(gated_gnn_init(&x, 1).is_err());
    }

    #[test]
    fn gated_step_without_neighbors_sees_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gru = GruCell::new("ggnn", 3, 3);
        let mut params = ParamSet::new();
        gru.init_params(&mut params, &mut rng);
        let w = Matrix::zeros(2, 2);
        let h = random_features(&mut rng, 2, 3);
        let stepped = gated_gnn_step(&w, &h, &gru, &params).unwrap();
        let direct = gru.forward(&params, &h, &Tensor::zeros(&[2, 3])).unwrap();
        assert_eq!(stepped.data(), direct.data());
    }

    #[test]
    fn gated_steps_match_loop_oracle_on_path_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gru = GruCell::new("ggnn", 2, 2);
        let mut params = ParamSet::new();
        gru.init_params(&mut params, &mut rng);
        // path 0 - 1 - 2 with edge weights 0.5 and 2.0
        let mut w = Matrix::zeros(3, 3);
        w.set(0, 1, 0.5);
        w.set(1, 0, 0.5);
        w.set(1, 2, 2.0);
        w.set(2, 1, 2.0);
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let mut h = gated_gnn_init(&x, 2).unwrap();
        for _ in 0..3 {
            h = gated_gnn_step(&w, &h, &gru, &params).unwrap();
        }
        // oracle: recompute the same three sweeps row by row
        let mut oracle = gated_gnn_init(&x, 2).unwrap();
        for _ in 0..3 {
            let mut rows = Vec::new();
            for v in 0..3 {
                let mut input = vec![0.0; 2];
                for u in 0..3 {
                    for j in 0..2 {
                        input[j] += w.get(v, u) * oracle.data()[u * 2 + j];
                    }
                }
                let hv = Tensor::new(vec![1, 2], oracle.data()[v * 2..(v + 1) * 2].to_vec())
                    .unwrap();
                let xv = Tensor::new(vec![1, 2], input).unwrap();
                rows.push(gru.forward(&params, &hv, &xv).unwrap());
            }
            let refs: Vec<&Tensor> = rows.iter().collect();
            oracle = crate::tensor::concat_rows(&refs).unwrap();
        }
        for (a, b) in h.data().iter().zip(oracle.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn esn_zero_state_zero_input_stays_zero() {
        let esn = GraphEsn::new(2, 5, 0.5, 7).unwrap();
        let w = Matrix::zeros(3, 3);
        let x = Matrix::zeros(3, 2);
        let h = esn.step(&w, &x, &Matrix::zeros(3, 5)).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn esn_single_node_self_weight() {
        let esn = GraphEsn::new(1, 4, 0.5, 3).unwrap();
        let mut w = Matrix::zeros(1, 1);
        w.set(0, 0, 2.0);
        let x = Matrix::from_rows(&[vec![0.7]]).unwrap();
        let h = esn.step(&w, &x, &Matrix::zeros(1, 4)).unwrap();
        // with zero state the recurrent term vanishes: h = tanh(2 W_in x)
        let driven = x.matmul(&esn.w_in.transpose()).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(h.get(0, j), (2.0 * driven.get(0, j)).tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn esn_forgets_its_initial_state() {
        // echo state property: two different initial states converge under
        // a contractive reservoir
        let esn = GraphEsn::new(1, 6, 0.5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // path graph on 4 nodes
        let mut w = Matrix::zeros(4, 4);
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 3)] {
            w.set(i, j, 1.0);
            w.set(j, i, 1.0);
        }
        let mut h1 = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let mut h2 = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let mut gap_start = 0.0;
        for step in 0..200 {
            let x = Matrix::from_fn(4, 1, |i, _| ((step + i) as f64 * 0.3).sin());
            h1 = esn.step(&w, &x, &h1).unwrap();
            h2 = esn.step(&w, &x, &h2).unwrap();
            if step == 0 {
                gap_start = h1.sub(&h2).unwrap().max_abs();
            }
        }
        let gap_end = h1.sub(&h2).unwrap().max_abs();
        assert!(gap_start > 1e-3, "degenerate start");
        assert!(
            gap_end < gap_start * 1e-6,
            "states failed to converge: {gap_start} -> {gap_end}"
        );
    }

    #[test]
    fn readout_is_bounded_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g_theta = Mlp::new("ro_theta", 4, 3, 5);
        let g_psi = Mlp::new("ro_psi", 4, 3, 5);
        let mut params = ParamSet::new();
        g_theta.init_params(&mut params, &mut rng);
        g_psi.init_params(&mut params, &mut rng);
        let h = random_features(&mut rng, 6, 2);
        let x = random_features(&mut rng, 6, 2);
        let base = graph_readout(&h, &x, &g_theta, &g_psi, &params).unwrap();
        assert!(base.data().iter().all(|v| v.abs() < 1.0));
        for _ in 0..5 {
            let perm = random_permutation(&mut rng, 6);
            let out = graph_readout(
                &permute_rows(&h, &perm),
                &permute_rows(&x, &perm),
                &g_theta,
                &g_psi,
                &params,
            )
            .unwrap();
            for (a, b) in out.data().iter().zip(base.data()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn readout_single_node_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g_theta = Mlp::new("t", 2, 2, 3);
        let g_psi = Mlp::new("p", 2, 2, 3);
        let mut params = ParamSet::new();
        g_theta.init_params(&mut params, &mut rng);
        g_psi.init_params(&mut params, &mut rng);
        let h = random_features(&mut rng, 1, 1);
        let x = random_features(&mut rng, 1, 1);
        let joint = concat_cols(&h, &x).unwrap();
        let want = g_theta
            .forward(&params, &joint)
            .unwrap()
            .sigmoid()
            .hadamard(&g_psi.forward(&params, &joint).unwrap().tanh())
            .unwrap()
            .tanh();
        let got = graph_readout(&h, &x, &g_theta, &g_psi, &params).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn readout_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g_theta = Mlp::new("t", 3, 2, 2);
        let g_psi = Mlp::new("p", 3, 2, 2);
        let mut params = ParamSet::new();
        g_theta.init_params(&mut params, &mut rng);
        g_psi.init_params(&mut params, &mut rng);
        let h = random_features(&mut rng, 4, 2);
        let x = random_features(&mut rng, 4, 1);
        let err = max_grad_error(&params, move |_, tp| {
            Ok(graph_readout(&h, &x, &g_theta, &g_psi, tp)?.sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn scarselli_zero_function_collapses_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = Mlp::new("f", 2 * 1 + 1 + 2, 3, 2);
        let mut params = ParamSet::new();
        f.init_params(&mut params, &mut rng);
        // zero all weights: f == 0
        let names: Vec<String> = params.names().map(String::from).collect();
        for n in names {
            let shape = params.get(&n).shape().to_vec();
            params.set(&n, Tensor::zeros(&shape)).unwrap();
        }
        let a = random_adjacency(&mut rng, 4, 0.7);
        let x = random_features(&mut rng, 4, 1);
        let h = random_features(&mut rng, 4, 2);
        let out = scarselli_step(&a, &x, &a, &h, &f, &params).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contractive_update_reaches_fixpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let f = Mlp::new("f", 2 * 1 + 1 + 2, 4, 2);
        let mut params = ParamSet::new();
        f.init_params(&mut params, &mut rng);
        // shrink the output weights to make the sweep strongly contractive
        let w2 = params.get("f.w2").scale(0.1);
        params.set("f.w2", w2).unwrap();
        let a = random_adjacency(&mut rng, 5, 0.5);
        let x = random_features(&mut rng, 5, 1);
        let h0 = random_features(&mut rng, 5, 2);
        let outcome = scarselli_fixpoint(&a, &x, &a, &h0, &f, &params).unwrap();
        assert!(outcome.converged, "no fixpoint after {}", outcome.iterations);
        assert!(outcome.iterations < 100);
        // the fixpoint satisfies H = step(H)
        let again = scarselli_step(&a, &x, &a, &outcome.h, &f, &params).unwrap();
        for (a, b) in again.data().iter().zip(outcome.h.data()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-5);
        }
    }

    #[test]
    fn scarselli_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let f = Mlp::new("f", 2 * 2 + 1 + 2, 4, 2);
        let mut params = ParamSet::new();
        f.init_params(&mut params, &mut rng);
        let a = random_adjacency(&mut rng, 5, 0.6);
        let x = random_features(&mut rng, 5, 2);
        let h = random_features(&mut rng, 5, 2);
        let base = scarselli_step(&a, &x, &a, &h, &f, &params).unwrap();
        let perm = random_permutation(&mut rng, 5);
        let out = scarselli_step(
            &permute_adjacency(&a, &perm),
            &permute_rows(&x, &perm),
            &permute_adjacency(&a, &perm),
            &permute_rows(&h, &perm),
            &f,
            &params,
        )
        .unwrap();
        let want = permute_rows(&base, &perm);
        for (got, want) in out.data().iter().zip(want.data()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn scarselli_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let f = Mlp::new("f", 2 * 1 + 1 + 2, 3, 2);
        let mut params = ParamSet::new();
        f.init_params(&mut params, &mut rng);
        let a = random_adjacency(&mut rng, 4, 0.7);
        let x = random_features(&mut rng, 4, 1);
        let h = random_features(&mut rng, 4, 2);
        let err = max_grad_error(&params, move |_, tp| {
            Ok(scarselli_step(&a, &x, &a, &h, &f, tp)?.sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }
}
