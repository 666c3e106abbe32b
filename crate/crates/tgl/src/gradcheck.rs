//! Central finite-difference gradient verification.
//!
//! Used by the test suites to check every differentiable operation against
//! an oracle that never touches the tape: the loss is re-evaluated at
//! `x ± h` per entry and compared with the recorded gradient. Kept in the
//! library (rather than a test module) so unit, integration and acceptance
//! tests share one implementation.

use crate::optim::{ParamSet, TrackedParams};
use crate::tensor::{Tape, Tensor};
use crate::Result;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Worst relative error between the tape gradient and the central
/// finite-difference estimate over every entry of every parameter.
///
/// The error for one entry is `|a - f| / max(|a|, |f|, 1)`, so entries where
/// both estimates are tiny compare absolutely.
pub fn max_grad_error<F>(params: &ParamSet, forward: F) -> Result<f64>
where
    F: Fn(&Tape, &TrackedParams) -> Result<Tensor>,
{
    let tape = Tape::new();
    let tracked = params.track(&tape);
    let loss = forward(&tape, &tracked)?;
    let grads = tracked.grads(&loss.backward()?);

    let eval = |p: &ParamSet| -> Result<f64> {
        let tape = Tape::new();
        let tracked = p.track(&tape);
        forward(&tape, &tracked)?.item()
    };

    let mut worst = 0.0f64;
    for (name, value) in params.iter() {
        let analytic = &grads[name];
        for i in 0..value.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.set(name, perturbed(value, i, FD_STEP))?;
            minus.set(name, perturbed(value, i, -FD_STEP))?;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * FD_STEP);
            let a = analytic.data()[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn perturbed(t: &Tensor, index: usize, delta: f64) -> Tensor {
    let mut data = t.data().to_vec();
    data[index] += delta;
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composite_matches_finite_differences() {
        // loss = sum(sigmoid(W x) . tanh(W x)) exercises matmul and two
        // activations through the checker itself.
        let mut params = ParamSet::new();
        params.insert(
            "w",
            Tensor::new(vec![2, 3], vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6]).unwrap(),
        );
        let x = Tensor::vector(&[0.7, -1.1, 0.4]);
        let err = max_grad_error(&params, move |_, tp| {
            let z = tp.get("w").matmul(&x)?;
            Ok(z.sigmoid().hadamard(&z.tanh())?.sum())
        })
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn deliberately_wrong_gradient_is_caught() {
        // detach() severs the tape, so the analytic gradient is zero while
        // the finite difference is not: the checker must flag it.
        let mut params = ParamSet::new();
        params.insert("w", Tensor::vector(&[1.0, 2.0]));
        let err = max_grad_error(&params, |_, tp| {
            let w = tp.get("w").detach();
            let fixed = Tensor::vector(&[1.0, 1.0]);
            // reattach something else so backward still runs
            Ok(tp.get("w").hadamard(&fixed)?.sum().scale(0.0).add(&w.dot(&w)?)?)
        })
        .unwrap();
        assert!(err > 1e-2, "checker failed to notice a broken gradient");
    }
}
