//! Temporal convolutional networks: plain, gated, and causal-dilated.

use crate::tensor::{Activation, Tensor};
use crate::{Error, Result};

/// Single TCN layer: 1-D convolution along the time axis followed by an
/// activation. With a linear activation and kernel matching the
/// autoregressive weights this reproduces an AR model's predictions.
pub fn tcn_forward(kernel: &Tensor, x: &Tensor, activation: Activation) -> Result<Tensor> {
    if kernel.rank() != 1 || x.rank() != 1 {
        return Err(Error::ShapeMismatch(
            "tcn_forward expects rank-1 kernel and series".into(),
        ));
    }
    if kernel.len() > x.len() {
        return Err(Error::ShapeMismatch(format!(
            "kernel of length {} exceeds series of length {}",
            kernel.len(),
            x.len()
        )));
    }
    Ok(activation.apply(&x.conv_nd(kernel)?))
}

/// Gated TCN: a tanh filter branch multiplied by a sigmoid gate branch.
/// Both branches see the same input, so their kernels must have the same
/// length to keep the outputs aligned. The output is bounded in (-1, 1).
pub fn gated_tcn_forward(filter: &Tensor, gate: &Tensor, x: &Tensor) -> Result<Tensor> {
    if filter.len() != gate.len() {
        return Err(Error::ShapeMismatch(format!(
            "filter kernel of length {} vs gate kernel of length {}",
            filter.len(),
            gate.len()
        )));
    }
    let f = tcn_forward(filter, x, Activation::Tanh)?;
    let g = tcn_forward(gate, x, Activation::Sigmoid)?;
    f.hadamard(&g)
}

/// Causal dilated TCN with a conditioning series.
///
/// Both branches combine a causal dilated convolution of the input with a
/// causal dilated convolution of the conditioning series `h`:
/// `z = tanh(f * x + f_h * h) (.) sigmoid(g * x + g_h * h)`. Convolutions
/// left-pad with zeros so the output has the input's length, and `z[t]`
/// depends only on samples at `t' <= t`; the receptive field reaching back
/// from `t` spans `(d - 1) * l + 1` samples.
///
/// `h` may be a single value (a constant conditioning vector), which is
/// broadcast over the whole time axis.
pub fn causal_tcn_forward(
    filter_x: &Tensor,
    gate_x: &Tensor,
    filter_h: &Tensor,
    gate_h: &Tensor,
    x: &Tensor,
    h: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    if x.rank() != 1 {
        return Err(Error::ShapeMismatch("series must be rank 1".into()));
    }
    let h = if h.len() == 1 {
        Tensor::full(&[x.len()], h.data()[0])
    } else if h.len() == x.len() {
        h.reshape(&[x.len()])?
    } else {
        return Err(Error::ShapeMismatch(format!(
            "conditioning series of length {} against input of length {}",
            h.len(),
            x.len()
        )));
    };
    let f = x
        .causal_conv1d(filter_x, dilation)?
        .add(&h.causal_conv1d(filter_h, dilation)?)?
        .tanh();
    let g = x
        .causal_conv1d(gate_x, dilation)?
        .add(&h.causal_conv1d(gate_h, dilation)?)?
        .sigmoid();
    f.hadamard(&g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_grad_error;
    use crate::optim::{ParamSet, ParamView};
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_tcn_equals_ar_regression() {
        // AR(2) prediction y_hat[t] = phi1 y[t-1] + phi2 y[t-2] equals a
        // valid convolution with the reversed weights.
        let phi = [0.6, -0.3];
        let y = [1.0, 0.5, -0.2, 0.8, 1.2, -0.4, 0.1];
        let kernel = Tensor::vector(&[phi[1], phi[0]]); // reversed
        let out = tcn_forward(&kernel, &Tensor::vector(&y), Activation::Linear).unwrap();
        // out[i] aligns with the prediction for time i + 2
        for (i, &z) in out.data().iter().enumerate() {
            let t = i + 2;
            let want = phi[0] * y[t - 1] + phi[1] * y[t - 2];
            assert_abs_diff_eq!(z, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn delta_kernel_is_activation_of_input() {
        let x = Tensor::vector(&[0.3, -0.9, 2.0]);
        let delta = Tensor::vector(&[1.0]);
        let z = tcn_forward(&delta, &x, Activation::Tanh).unwrap();
        for (a, b) in z.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(*a, b.tanh(), epsilon = 1e-14);
        }
    }

    #[test]
    fn tcn_matches_conv_oracle() {
        let x = Tensor::vector(&[0.1, 0.7, -0.5, 0.9, 0.2]);
        let k = Tensor::vector(&[0.3, -0.6, 0.2]);
        let z = tcn_forward(&k, &x, Activation::Linear).unwrap();
        let oracle = x.conv_nd(&k).unwrap();
        assert_eq!(z.data(), oracle.data());
    }

    #[test]
    fn kernel_too_long_rejected() {
        let x = Tensor::vector(&[1.0, 2.0]);
        let k = Tensor::vector(&[1.0, 1.0, 1.0]);
        assert!(tcn_forward(&k, &x, Activation::Linear).is_err());
    }

    #[test]
    fn gated_tcn_identity_kernels() {
        let x = Tensor::vector(&[0.5, -1.5, 2.5]);
        let delta = Tensor::vector(&[1.0]);
        let z = gated_tcn_forward(&delta, &delta, &x).unwrap();
        for (zi, xi) in z.data().iter().zip(x.data()) {
            assert_abs_diff_eq!(*zi, xi.tanh() * (1.0 / (1.0 + (-xi).exp())), epsilon = 1e-12);
        }
        // outputs always inside (-1, 1)
        assert!(z.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gated_tcn_closed_gate_squashes_output() {
        // a strongly negative gate kernel on positive input closes the gate
        let x = Tensor::vector(&[5.0, 5.0, 5.0, 5.0]);
        let f = Tensor::vector(&[1.0, 1.0]);
        let g = Tensor::vector(&[-20.0, -20.0]);
        let z = gated_tcn_forward(&f, &g, &x).unwrap();
        for v in z.data() {
            assert!(v.abs() < 1e-8, "gate failed to close: {v}");
        }
    }

    #[test]
    fn causal_output_ignores_the_future() {
        let f = Tensor::vector(&[0.4, -0.2, 0.7]);
        let g = Tensor::vector(&[0.1, 0.3, -0.5]);
        let fh = Tensor::vector(&[0.2, 0.2, 0.2]);
        let gh = Tensor::vector(&[-0.1, 0.0, 0.1]);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let h = Tensor::scalar(0.3);
        let base = causal_tcn_forward(&f, &g, &fh, &gh, &Tensor::vector(&x), &h, 2).unwrap();
        // perturb x[7]: outputs before index 7 must not move
        let mut x2 = x.clone();
        x2[7] += 100.0;
        let bumped = causal_tcn_forward(&f, &g, &fh, &gh, &Tensor::vector(&x2), &h, 2).unwrap();
        for t in 0..7 {
            assert_eq!(base.data()[t], bumped.data()[t], "leak at t={t}");
        }
        assert!(base.data()[7] != bumped.data()[7]);
    }

    #[test]
    fn receptive_field_is_sharp() {
        // kernel width 3, dilation 2: z[t] sees x[t-4..=t] and nothing older
        let f = Tensor::vector(&[0.9, 0.8, 0.7]);
        let g = Tensor::vector(&[0.5, 0.4, 0.3]);
        let zero = Tensor::vector(&[0.0, 0.0, 0.0]);
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos()).collect();
        let h = Tensor::scalar(0.0);
        let base = causal_tcn_forward(&f, &g, &zero, &zero, &Tensor::vector(&x), &h, 2).unwrap();
        let t = 9usize;
        let reach = (3 - 1) * 2; // (d-1) * l
        // inside the receptive field: changes matter
        let mut inside = x.clone();
        inside[t - reach] += 1.0;
        let z_in =
            causal_tcn_forward(&f, &g, &zero, &zero, &Tensor::vector(&inside), &h, 2).unwrap();
        assert!(z_in.data()[t] != base.data()[t]);
        // one step beyond: invisible
        let mut outside = x.clone();
        outside[t - reach - 1] += 1.0;
        let z_out =
            causal_tcn_forward(&f, &g, &zero, &zero, &Tensor::vector(&outside), &h, 2).unwrap();
        assert_eq!(z_out.data()[t], base.data()[t]);
    }

    #[test]
    fn zero_conditioning_and_zero_gate_kernels_give_half_tanh() {
        let f = Tensor::vector(&[0.6, -0.4]);
        let zeros = Tensor::vector(&[0.0, 0.0]);
        let x = Tensor::vector(&[0.2, 0.9, -0.5, 1.1]);
        let h = Tensor::scalar(0.0);
        let z = causal_tcn_forward(&f, &zeros, &zeros, &zeros, &x, &h, 1).unwrap();
        let filtered = x.causal_conv1d(&f, 1).unwrap();
        for (zi, fi) in z.data().iter().zip(filtered.data()) {
            assert_abs_diff_eq!(*zi, fi.tanh() * 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn causal_tcn_gradcheck() {
        let mut params = ParamSet::new();
        params.insert("f", Tensor::vector(&[0.4, -0.2]));
        params.insert("g", Tensor::vector(&[0.3, 0.1]));
        params.insert("fh", Tensor::vector(&[0.2, -0.3]));
        params.insert("gh", Tensor::vector(&[-0.1, 0.2]));
        let x = Tensor::vector(&[0.5, -0.4, 0.8, 0.1, -0.9]);
        let h = Tensor::vector(&[0.3, 0.2, -0.1, 0.4, 0.0]);
        let err = max_grad_error(&params, move |_, tp| {
            Ok(causal_tcn_forward(
                tp.param("f"),
                tp.param("g"),
                tp.param("fh"),
                tp.param("gh"),
                &x,
                &h,
                1,
            )?
            .sum())
        })
        .unwrap();
        assert!(err < 1e-4, "rel err {err}");
    }
}
