//! Recurrent cells: plain tanh recurrence, LSTM, and GRU.
//!
//! Every cell works on a batch: `h_prev` and `x` are rank-2 tensors whose
//! rows are independent instances (a single instance is the 1-row case).
//! Gates follow the concatenation form `gate = act([h_prev x] W + b)`, so
//! each weight is stored as `(hidden + input) x hidden` and biases as
//! `hidden`.

use crate::optim::{glorot, ParamSet, ParamView};
use crate::tensor::{concat_cols, Tensor};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;

fn check_dims(
    cell: &str,
    h_prev: &Tensor,
    x: &Tensor,
    hidden: usize,
    input: usize,
) -> Result<()> {
    let ([n, hd], [m, xd]) = (h_prev.shape(), x.shape()) else {
        return Err(Error::ShapeMismatch(format!(
            "{cell}: state {:?} and input {:?} must be rank 2",
            h_prev.shape(),
            x.shape()
        )));
    };
    if n != m || *hd != hidden || *xd != input {
        return Err(Error::ShapeMismatch(format!(
            "{cell}: state {:?} and input {:?} against hidden={hidden}, input={input}",
            h_prev.shape(),
            x.shape()
        )));
    }
    Ok(())
}

/// Elman recurrence `h = tanh([h_prev x] W + b)`.
#[derive(Debug, Clone)]
pub struct RnnCell {
    prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl RnnCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        RnnCell {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        params.insert(
            self.name("w"),
            glorot(rng, self.hidden_dim + self.input_dim, self.hidden_dim),
        );
        params.insert(self.name("b"), Tensor::zeros(&[self.hidden_dim]));
    }

    pub fn forward<P: ParamView>(&self, p: &P, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
        check_dims("rnn_cell", h_prev, x, self.hidden_dim, self.input_dim)?;
        let joint = concat_cols(h_prev, x)?;
        Ok(joint
            .matmul(p.param(&self.name("w")))?
            .add_row_broadcast(p.param(&self.name("b")))?
            .tanh())
    }
}

/// LSTM cell with forget/input/output gates modulating a cell state.
#[derive(Debug, Clone)]
pub struct LstmCell {
    prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        LstmCell {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        for gate in ["w_f", "w_i", "w_o", "w_c"] {
            params.insert(
                self.name(gate),
                glorot(rng, self.hidden_dim + self.input_dim, self.hidden_dim),
            );
        }
        for bias in ["b_f", "b_i", "b_o", "b_c"] {
            params.insert(self.name(bias), Tensor::zeros(&[self.hidden_dim]));
        }
    }

    /// One step: returns `(h, c)`.
    pub fn forward<P: ParamView>(
        &self,
        p: &P,
        h_prev: &Tensor,
        c_prev: &Tensor,
        x: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        check_dims("lstm_cell", h_prev, x, self.hidden_dim, self.input_dim)?;
        if c_prev.shape() != h_prev.shape() {
            return Err(Error::ShapeMismatch(format!(
                "lstm_cell: cell state {:?} vs hidden state {:?}",
                c_prev.shape(),
                h_prev.shape()
            )));
        }
        let joint = concat_cols(h_prev, x)?;
        let gate = |w: &str, b: &str| -> Result<Tensor> {
            Ok(joint
                .matmul(p.param(&self.name(w)))?
                .add_row_broadcast(p.param(&self.name(b)))?
                .sigmoid())
        };
        let f = gate("w_f", "b_f")?;
        let i = gate("w_i", "b_i")?;
        let o = gate("w_o", "b_o")?;
        let c_hat = joint
            .matmul(p.param(&self.name("w_c")))?
            .add_row_broadcast(p.param(&self.name("b_c")))?
            .tanh();
        let c = f.hadamard(c_prev)?.add(&i.hadamard(&c_hat)?)?;
        let h = o.hadamard(&c.tanh())?;
        Ok((h, c))
    }
}

/// GRU cell: update/reset gates, then a linear interpolation between the
/// previous state and the candidate.
#[derive(Debug, Clone)]
pub struct GruCell {
    prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        GruCell {
            prefix: prefix.into(),
            input_dim,
            hidden_dim,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init_params(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng) {
        for gate in ["w_u", "w_r", "w_h"] {
            params.insert(
                self.name(gate),
                glorot(rng, self.hidden_dim + self.input_dim, self.hidden_dim),
            );
        }
        for bias in ["b_u", "b_r", "b_h"] {
            params.insert(self.name(bias), Tensor::zeros(&[self.hidden_dim]));
        }
    }

    pub fn forward<P: ParamView>(&self, p: &P, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
        check_dims("gru_cell", h_prev, x, self.hidden_dim, self.input_dim)?;
        let joint = concat_cols(h_prev, x)?;
        let gate = |w: &str, b: &str| -> Result<Tensor> {
            Ok(joint
                .matmul(p.param(&self.name(w)))?
                .add_row_broadcast(p.param(&self.name(b)))?
                .sigmoid())
        };
        let u = gate("w_u", "b_u")?;
        let r = gate("w_r", "b_r")?;
        let gated_prev = r.hadamard(h_prev)?;
        let h_hat = concat_cols(&gated_prev, x)?
            .matmul(p.param(&self.name("w_h")))?
            .add_row_broadcast(p.param(&self.name("b_h")))?
            .tanh();
        // h = u (.) h_prev + (1 - u) (.) h_hat
        let keep = u.hadamard(h_prev)?;
        let take = u.neg().add_scalar(1.0).hadamard(&h_hat)?;
        keep.add(&take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_grad_error;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(99)
    }

    fn zero_params(cell_init: impl Fn(&mut ParamSet, &mut ChaCha8Rng)) -> ParamSet {
        let mut p = ParamSet::new();
        let mut r = rng();
        cell_init(&mut p, &mut r);
        // overwrite every tensor with zeros
        let names: Vec<String> = p.names().map(String::from).collect();
        for n in names {
            let shape = p.get(&n).shape().to_vec();
            p.set(&n, Tensor::zeros(&shape)).unwrap();
        }
        p
    }

    #[test]
    fn rnn_zero_params_gives_zero_state_and_bounded_output() {
        let cell = RnnCell::new("rnn", 2, 3);
        let p = zero_params(|p, r| cell.init_params(p, r));
        let h_prev = Tensor::new(vec![1, 3], vec![0.4, -0.2, 0.9]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let h = cell.forward(&p, &h_prev, &x).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));

        let mut p2 = ParamSet::new();
        cell.init_params(&mut p2, &mut rng());
        let h2 = cell.forward(&p2, &h_prev, &x).unwrap();
        assert!(h2.data().iter().all(|&v| v.abs() < 1.0));
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        let cell = RnnCell::new("rnn", 2, 3);
        let mut params = ParamSet::new();
        cell.init_params(&mut params, &mut rng());
        let h_prev = Tensor::new(vec![1, 3], vec![0.1, -0.5, 0.3]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.8, -0.4]).unwrap();
        let err = max_grad_error(&params, move |_, tp| {
            Ok(cell.forward(tp, &h_prev, &x)?.sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn lstm_zero_params_halves_cell_state() {
        let cell = LstmCell::new("lstm", 2, 3);
        let p = zero_params(|p, r| cell.init_params(p, r));
        let h_prev = Tensor::zeros(&[1, 3]);
        let c_prev = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.3, 0.7]).unwrap();
        let (h, c) = cell.forward(&p, &h_prev, &c_prev, &x).unwrap();
        for (ci, want) in c.data().iter().zip(&[0.5, -1.0, 0.25]) {
            assert_abs_diff_eq!(ci, want, epsilon = 1e-12);
        }
        for (hi, ci) in h.data().iter().zip(c.data()) {
            assert_abs_diff_eq!(*hi, 0.5 * ci.tanh(), epsilon = 1e-12);
        }
    }

    #[test]
    fn lstm_cell_state_growth_bound() {
        // |c_t| <= |c_prev| + 1 since the gates are in (0,1) and the
        // candidate in (-1,1).
        let cell = LstmCell::new("lstm", 2, 4);
        let mut p = ParamSet::new();
        cell.init_params(&mut p, &mut rng());
        let mut c = Tensor::new(vec![1, 4], vec![3.0, -2.0, 0.0, 1.0]).unwrap();
        let mut h = Tensor::zeros(&[1, 4]);
        for step in 0..10 {
            let x = Tensor::new(vec![1, 2], vec![(step as f64).sin(), 1.0]).unwrap();
            let before: Vec<f64> = c.data().to_vec();
            let (h2, c2) = cell.forward(&p, &h, &c, &x).unwrap();
            for (after, b) in c2.data().iter().zip(&before) {
                assert!(after.abs() <= b.abs() + 1.0 + 1e-12);
            }
            h = h2;
            c = c2;
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let cell = LstmCell::new("lstm", 2, 2);
        let mut params = ParamSet::new();
        cell.init_params(&mut params, &mut rng());
        let h_prev = Tensor::new(vec![1, 2], vec![0.2, -0.1]).unwrap();
        let c_prev = Tensor::new(vec![1, 2], vec![0.5, 0.4]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![-0.7, 0.9]).unwrap();
        let err = max_grad_error(&params, move |_, tp| {
            let (h, c) = cell.forward(tp, &h_prev, &c_prev, &x)?;
            h.sum().add(&c.sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn gru_zero_params_halves_state() {
        let cell = GruCell::new("gru", 2, 3);
        let p = zero_params(|p, r| cell.init_params(p, r));
        let h_prev = Tensor::new(vec![1, 3], vec![0.8, -0.6, 0.2]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![5.0, -3.0]).unwrap();
        let h = cell.forward(&p, &h_prev, &x).unwrap();
        for (got, want) in h.data().iter().zip(h_prev.data()) {
            assert_abs_diff_eq!(*got, 0.5 * want, epsilon = 1e-12);
        }
    }

    #[test]
    fn gru_state_stays_in_unit_box() {
        let cell = GruCell::new("gru", 1, 3);
        let mut p = ParamSet::new();
        cell.init_params(&mut p, &mut rng());
        let mut h = Tensor::new(vec![1, 3], vec![0.9, -0.9, 0.1]).unwrap();
        for step in 0..20 {
            let x = Tensor::new(vec![1, 1], vec![(step as f64 * 0.7).cos() * 2.0]).unwrap();
            h = cell.forward(&p, &h, &x).unwrap();
            for v in h.data() {
                assert!(v.abs() <= 1.0, "state left [-1,1]: {v}");
            }
        }
    }

    #[test]
    fn gru_saturated_update_gate_keeps_state() {
        // Large positive update-gate bias forces u ~ 1, so h ~ h_prev.
        let cell = GruCell::new("gru", 2, 3);
        let mut p = ParamSet::new();
        cell.init_params(&mut p, &mut rng());
        p.set("gru.b_u", Tensor::vector(&[20.0, 20.0, 20.0])).unwrap();
        let h_prev = Tensor::new(vec![1, 3], vec![0.3, -0.8, 0.5]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![2.0, -2.0]).unwrap();
        let h = cell.forward(&p, &h_prev, &x).unwrap();
        for (got, want) in h.data().iter().zip(h_prev.data()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let cell = GruCell::new("gru", 3, 2);
        let mut params = ParamSet::new();
        cell.init_params(&mut params, &mut rng());
        let h_prev = Tensor::new(vec![2, 2], vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let x = Tensor::new(vec![2, 3], vec![0.5, -0.5, 0.2, 0.9, 0.1, -0.2]).unwrap();
        let err = max_grad_error(&params, move |_, tp| {
            Ok(cell.forward(tp, &h_prev, &x)?.sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn dim_mismatch_rejected() {
        let cell = GruCell::new("gru", 2, 3);
        let mut p = ParamSet::new();
        cell.init_params(&mut p, &mut rng());
        let bad_h = Tensor::zeros(&[1, 2]);
        let x = Tensor::zeros(&[1, 2]);
        assert!(cell.forward(&p, &bad_h, &x).is_err());
    }
}
