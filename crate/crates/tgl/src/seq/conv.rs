//! Dilation masks, dilated convolution, and tile pooling on top of the
//! tensor convolution primitive.

use crate::tensor::{PoolRule, Tensor};
use crate::{Error, Result};

/// The `l`-dilation mask over an n-cube of width `d`: entry one exactly
/// where every (1-based) coordinate is a multiple of `l`, zero elsewhere.
/// Out of the `d^n` kernel parameters, `d^n - floor(d/l)^n` are masked to
/// zero.
pub fn dilation_mask(d: usize, n: usize, l: usize) -> Result<Tensor> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("mask needs d >= 1 and n >= 1".into()));
    }
    if l == 0 {
        return Err(Error::InvalidArgument("dilation factor must be >= 1".into()));
    }
    let shape = vec![d; n];
    let total: usize = shape.iter().product();
    let mut data = vec![0.0; total];
    // row-major walk over the n-cube
    for (flat, slot) in data.iter_mut().enumerate() {
        let mut rest = flat;
        let mut keep = true;
        for axis in (0..n).rev() {
            let coord = rest % d; // 0-based
            rest /= d;
            if (coord + 1) % l != 0 {
                keep = false;
            }
            let _ = axis;
        }
        if keep {
            *slot = 1.0;
        }
    }
    Tensor::new(shape, data)
}

/// Dilated convolution: mask the kernel, then run the plain valid
/// convolution. With `l = 1` the mask is all ones and this is exactly
/// `conv_nd`.
pub fn dilated_conv(kernel: &Tensor, x: &Tensor, l: usize) -> Result<Tensor> {
    let d = *kernel
        .shape()
        .first()
        .ok_or_else(|| Error::ShapeMismatch("kernel must have rank >= 1".into()))?;
    let mask = dilation_mask(d, kernel.rank(), l)?;
    let masked = kernel.hadamard(&mask)?;
    x.conv_nd(&masked)
}

/// Tile pooling re-exported with the layer-style argument order.
pub fn pool(x: &Tensor, tile: usize, rule: PoolRule) -> Result<Tensor> {
    x.pool(tile, rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::max_grad_error;
    use crate::optim::{ParamSet, ParamView};

    #[test]
    fn mask_1d_examples() {
        // d=3, l=2: only the (1-based) second slot survives
        let m = dilation_mask(3, 1, 2).unwrap();
        assert_eq!(m.data(), &[0.0, 1.0, 0.0]);
        assert_eq!(m.data().iter().filter(|&&v| v == 0.0).count(), 3 - 3 / 2);
        // l=1 keeps everything
        let all = dilation_mask(4, 1, 1).unwrap();
        assert!(all.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_zero_count_matches_formula() {
        for (d, n, l) in [(4usize, 2usize, 2usize), (5, 2, 2), (6, 3, 3), (3, 2, 2)] {
            let m = dilation_mask(d, n, l).unwrap();
            let zeros = m.data().iter().filter(|&&v| v == 0.0).count();
            let want = d.pow(n as u32) - (d / l).pow(n as u32);
            assert_eq!(zeros, want, "d={d} n={n} l={l}");
            // cross-check by enumeration
            let by_enum = m.len() - m.data().iter().filter(|&&v| v == 1.0).count();
            assert_eq!(zeros, by_enum);
        }
    }

    #[test]
    fn dilated_conv_with_unit_dilation_is_plain_conv() {
        let x = Tensor::vector(&[1.0, -2.0, 3.0, 0.5]);
        let k = Tensor::vector(&[0.5, 1.0, -1.0]);
        let a = dilated_conv(&k, &x, 1).unwrap();
        let b = x.conv_nd(&k).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn dilated_conv_zeroes_masked_taps() {
        // d=3, l=2 leaves only the middle tap: output = middle * window centre
        let x = Tensor::vector(&[1.0, 2.0, 3.0, 4.0]);
        let k = Tensor::vector(&[10.0, 2.0, 10.0]);
        let y = dilated_conv(&k, &x, 2).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0]);
    }

    #[test]
    fn dilated_conv_gradcheck() {
        let mut params = ParamSet::new();
        params.insert("k", Tensor::vector(&[0.4, -0.3, 0.8]));
        let x = Tensor::vector(&[0.5, 1.5, -0.7, 0.2, 0.9]);
        let err = max_grad_error(&params, move |_, tp| {
            Ok(dilated_conv(tp.param("k"), &x, 2)?.sum())
        })
        .unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn pool_gradcheck_all_rules() {
        for rule in [PoolRule::Max, PoolRule::Avg, PoolRule::L2] {
            let mut params = ParamSet::new();
            // distinct magnitudes keep max-pool differentiable at the test point
            params.insert(
                "x",
                Tensor::new(vec![4, 4], (0..16).map(|i| 0.37 * i as f64 - 2.9).collect()).unwrap(),
            );
            let err = max_grad_error(&params, move |_, tp| {
                Ok(tp.param("x").pool(2, rule)?.sum())
            })
            .unwrap();
            assert!(err < 1e-6, "{rule:?} rel err {err}");
        }
    }
}
