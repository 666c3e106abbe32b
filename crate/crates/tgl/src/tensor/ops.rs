//! Tensor operations and their reverse-mode rules.

use super::{flat_index, for_each_index, strides, Tensor};
use crate::{Error, Result};
use std::rc::Rc;

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Pooling reduction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolRule {
    Max,
    Avg,
    L2,
}

/// Pointwise activation selector shared by the neural layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    Linear,
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, t: &Tensor) -> Tensor {
        match self {
            Activation::Linear => t.clone(),
            Activation::Tanh => t.tanh(),
            Activation::Sigmoid => t.sigmoid(),
            Activation::Relu => t.relu(),
        }
    }
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs, "add")?;
        let data = self.data().iter().zip(rhs.data()).map(|(a, b)| a + b).collect();
        Tensor::record2(
            self,
            rhs,
            self.shape().to_vec(),
            data,
            |g| g.to_vec(),
            |g| g.to_vec(),
        )
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs, "sub")?;
        let data = self.data().iter().zip(rhs.data()).map(|(a, b)| a - b).collect();
        Tensor::record2(
            self,
            rhs,
            self.shape().to_vec(),
            data,
            |g| g.to_vec(),
            |g| g.iter().map(|v| -v).collect(),
        )
    }

    pub fn neg(&self) -> Tensor {
        let data = self.data().iter().map(|v| -v).collect();
        Tensor::record1(self, self.shape().to_vec(), data, |g| {
            g.iter().map(|v| -v).collect()
        })
    }

    /// Multiply by an untracked constant.
    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| c * v).collect();
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter().map(|v| c * v).collect()
        })
    }

    /// Add an untracked constant to every entry.
    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| c + v).collect();
        Tensor::record1(self, self.shape().to_vec(), data, |g| g.to_vec())
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs, "hadamard")?;
        let data = self.data().iter().zip(rhs.data()).map(|(a, b)| a * b).collect();
        let a = self.data.clone();
        let b = rhs.data.clone();
        Tensor::record2(
            self,
            rhs,
            self.shape().to_vec(),
            data,
            move |g| g.iter().zip(b.iter()).map(|(g, b)| g * b).collect(),
            move |g| g.iter().zip(a.iter()).map(|(g, a)| g * a).collect(),
        )
    }

    /// Elementwise (Hadamard) division; rejects zero entries in the divisor.
    pub fn hadamard_div(&self, rhs: &Tensor) -> Result<Tensor> {
        same_shape(self, rhs, "hadamard_div")?;
        if rhs.data().iter().any(|&v| v == 0.0) {
            return Err(Error::Numeric("division by a zero entry".into()));
        }
        let data = self.data().iter().zip(rhs.data()).map(|(a, b)| a / b).collect();
        let a = self.data.clone();
        let b = rhs.data.clone();
        let b2 = rhs.data.clone();
        Tensor::record2(
            self,
            rhs,
            self.shape().to_vec(),
            data,
            move |g| g.iter().zip(b.iter()).map(|(g, b)| g / b).collect(),
            move |g| {
                g.iter()
                    .zip(a.iter().zip(b2.iter()))
                    .map(|(g, (a, b))| -g * a / (b * b))
                    .collect()
            },
        )
    }

    /// Matrix product. Accepts `[p,q] x [q,r] -> [p,r]`, a vector on the
    /// right (`[p,q] x [q] -> [p]`) or on the left (`[q] x [q,r] -> [r]`).
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (p, q1) = match self.shape() {
            [p, q] => (*p, *q),
            [q] => (1, *q),
            s => {
                return Err(Error::ShapeMismatch(format!(
                    "matmul lhs must be rank 1 or 2, got {s:?}"
                )))
            }
        };
        let (q2, r) = match rhs.shape() {
            [q, r] => (*q, *r),
            [q] => (*q, 1),
            s => {
                return Err(Error::ShapeMismatch(format!(
                    "matmul rhs must be rank 1 or 2, got {s:?}"
                )))
            }
        };
        if q1 != q2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul inner dims {q1} vs {q2}"
            )));
        }
        let q = q1;
        let out_shape = match (self.rank(), rhs.rank()) {
            (2, 2) => vec![p, r],
            (2, 1) => vec![p],
            (1, 2) => vec![r],
            _ => vec![p, r], // vector x vector is not reachable: rank-1 rhs means r = 1
        };
        let data = matmul_raw(self.data(), p, q, rhs.data(), r);
        let a = self.data.clone();
        let b = rhs.data.clone();
        Tensor::record2(
            self,
            rhs,
            out_shape,
            data,
            // dA = g B^T
            move |g| {
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    for k in 0..q {
                        let mut s = 0.0;
                        for j in 0..r {
                            s += g[i * r + j] * b[k * r + j];
                        }
                        da[i * q + k] = s;
                    }
                }
                da
            },
            // dB = A^T g
            move |g| {
                let mut db = vec![0.0; q * r];
                for k in 0..q {
                    for j in 0..r {
                        let mut s = 0.0;
                        for i in 0..p {
                            s += a[i * q + k] * g[i * r + j];
                        }
                        db[k * r + j] = s;
                    }
                }
                db
            },
        )
    }

    /// Sum of the elementwise product, as a scalar tensor.
    pub fn dot(&self, rhs: &Tensor) -> Result<Tensor> {
        Ok(self.hadamard(rhs)?.sum())
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let [r, c] = self.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "transpose needs rank 2, got {:?}",
                self.shape()
            )));
        };
        let (r, c) = (*r, *c);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data()[i * c + j];
            }
        }
        Ok(Tensor::record1(self, vec![c, r], data, move |g| {
            let mut out = vec![0.0; r * c];
            for j in 0..c {
                for i in 0..r {
                    out[i * c + j] = g[j * r + i];
                }
            }
            out
        }))
    }

    /// Reinterpret the data with a new shape of the same total size.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                self.shape(),
                shape
            )));
        }
        Ok(Tensor::record1(
            self,
            shape.to_vec(),
            self.data().to_vec(),
            |g| g.to_vec(),
        ))
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let n = self.len();
        Tensor::record1(self, Vec::new(), vec![total], move |g| vec![g[0]; n])
    }

    /// Mean of all entries as a scalar.
    pub fn mean(&self) -> Tensor {
        let n = self.len().max(1);
        let total: f64 = self.data().iter().sum();
        Tensor::record1(self, Vec::new(), vec![total / n as f64], move |g| {
            vec![g[0] / n as f64; n]
        })
    }

    /// Sum a rank-2 tensor along an axis: axis 0 collapses rows (result
    /// length = cols), axis 1 collapses columns (result length = rows).
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        let [n, d] = self.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "sum_axis needs rank 2, got {:?}",
                self.shape()
            )));
        };
        let (n, d) = (*n, *d);
        match axis {
            0 => {
                let mut out = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        out[j] += self.data()[i * d + j];
                    }
                }
                Ok(Tensor::record1(self, vec![d], out, move |g| {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        dx[i * d..(i + 1) * d].copy_from_slice(g);
                    }
                    dx
                }))
            }
            1 => {
                let out: Vec<f64> = (0..n)
                    .map(|i| self.data()[i * d..(i + 1) * d].iter().sum())
                    .collect();
                Ok(Tensor::record1(self, vec![n], out, move |g| {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            dx[i * d + j] = g[i];
                        }
                    }
                    dx
                }))
            }
            _ => Err(Error::InvalidArgument(format!("sum_axis axis {axis}"))),
        }
    }

    /// `out[i, j] = self[i, j] + bias[j]` for a rank-2 tensor and rank-1 bias.
    pub fn add_row_broadcast(&self, bias: &Tensor) -> Result<Tensor> {
        let [n, d] = self.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "add_row_broadcast needs rank 2, got {:?}",
                self.shape()
            )));
        };
        let (n, d) = (*n, *d);
        if bias.shape() != [d] {
            return Err(Error::ShapeMismatch(format!(
                "bias {:?} against {n}x{d}",
                bias.shape()
            )));
        }
        let mut data = self.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += bias.data()[j];
            }
        }
        Tensor::record2(
            self,
            bias,
            vec![n, d],
            data,
            |g| g.to_vec(),
            move |g| {
                let mut db = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        db[j] += g[i * d + j];
                    }
                }
                db
            },
        )
    }

    /// `out[i, j] = self[i, j] * scale[j]` for a rank-2 tensor and rank-1
    /// per-column scale.
    pub fn mul_row_broadcast(&self, scale: &Tensor) -> Result<Tensor> {
        let [n, d] = self.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "mul_row_broadcast needs rank 2, got {:?}",
                self.shape()
            )));
        };
        let (n, d) = (*n, *d);
        if scale.shape() != [d] {
            return Err(Error::ShapeMismatch(format!(
                "scale {:?} against {n}x{d}",
                scale.shape()
            )));
        }
        let mut data = self.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] *= scale.data()[j];
            }
        }
        let a = self.data.clone();
        let s = scale.data.clone();
        Tensor::record2(
            self,
            scale,
            vec![n, d],
            data,
            move |g| {
                let mut da = vec![0.0; n * d];
                for i in 0..n {
                    for j in 0..d {
                        da[i * d + j] = g[i * d + j] * s[j];
                    }
                }
                da
            },
            move |g| {
                let mut ds = vec![0.0; d];
                for i in 0..n {
                    for j in 0..d {
                        ds[j] += g[i * d + j] * a[i * d + j];
                    }
                }
                ds
            },
        )
    }

    /// Gather rows of a rank-2 tensor; duplicate indices are allowed and
    /// their gradients accumulate.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let [n, d] = self.shape() else {
            return Err(Error::ShapeMismatch(format!(
                "select_rows needs rank 2, got {:?}",
                self.shape()
            )));
        };
        let (n, d) = (*n, *d);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {n} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&self.data()[i * d..(i + 1) * d]);
        }
        let idx = indices.to_vec();
        let k = indices.len();
        Ok(Tensor::record1(self, vec![k, d], data, move |g| {
            let mut dx = vec![0.0; n * d];
            for (slot, &i) in idx.iter().enumerate() {
                for j in 0..d {
                    dx[i * d + j] += g[slot * d + j];
                }
            }
            dx
        }))
    }

    /// Gather entries by flat index into a rank-1 tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "flat index {bad} out of range for {n} entries"
            )));
        }
        let data: Vec<f64> = indices.iter().map(|&i| self.data()[i]).collect();
        let idx = indices.to_vec();
        Ok(Tensor::record1(self, vec![indices.len()], data, move |g| {
            let mut dx = vec![0.0; n];
            for (slot, &i) in idx.iter().enumerate() {
                dx[i] += g[slot];
            }
            dx
        }))
    }

    /// Multiply by a scalar tensor (which may itself be tracked).
    pub fn scale_by(&self, s: &Tensor) -> Result<Tensor> {
        if !s.is_scalar() {
            return Err(Error::ShapeMismatch(format!(
                "scale_by needs a scalar, got {:?}",
                s.shape()
            )));
        }
        let sv = s.data()[0];
        let data = self.data().iter().map(|v| sv * v).collect();
        let a = self.data.clone();
        Tensor::record2(
            self,
            s,
            self.shape().to_vec(),
            data,
            move |g| g.iter().map(|v| sv * v).collect(),
            move |g| vec![g.iter().zip(a.iter()).map(|(g, a)| g * a).sum()],
        )
    }

    pub fn sigmoid(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| stable_sigmoid(x)).collect();
        let out = Rc::new(data.clone());
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(out.iter())
                .map(|(g, s)| g * s * (1.0 - s))
                .collect()
        })
    }

    pub fn tanh(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|x| x.tanh()).collect();
        let out = Rc::new(data.clone());
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(out.iter())
                .map(|(g, t)| g * (1.0 - t * t))
                .collect()
        })
    }

    pub fn relu(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|&x| x.max(0.0)).collect();
        let x = self.data.clone();
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(x.iter())
                .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                .collect()
        })
    }

    pub fn leaky_relu(&self, alpha: f64) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| if x > 0.0 { x } else { alpha * x })
            .collect();
        let x = self.data.clone();
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(x.iter())
                .map(|(g, x)| if *x > 0.0 { *g } else { alpha * g })
                .collect()
        })
    }

    pub fn exp(&self) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|x| x.exp()).collect();
        let out = Rc::new(data.clone());
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter().zip(out.iter()).map(|(g, e)| g * e).collect()
        })
    }

    /// Natural log; requires strictly positive entries.
    pub fn ln(&self) -> Result<Tensor> {
        if self.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Numeric("ln of a non-positive entry".into()));
        }
        let data: Vec<f64> = self.data().iter().map(|x| x.ln()).collect();
        let x = self.data.clone();
        Ok(Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter().zip(x.iter()).map(|(g, x)| g / x).collect()
        }))
    }

    /// Square root; requires non-negative entries.
    pub fn sqrt(&self) -> Result<Tensor> {
        if self.data().iter().any(|&x| x < 0.0) {
            return Err(Error::Numeric("sqrt of a negative entry".into()));
        }
        let data: Vec<f64> = self.data().iter().map(|x| x.sqrt()).collect();
        let out = Rc::new(data.clone());
        Ok(Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(out.iter())
                .map(|(g, s)| g / (2.0 * s))
                .collect()
        }))
    }

    /// Numerically stable `ln(1 + e^x)`.
    pub fn softplus(&self) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| {
                if x > 0.0 {
                    x + (-x).exp().ln_1p()
                } else {
                    x.exp().ln_1p()
                }
            })
            .collect();
        let x = self.data.clone();
        Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            g.iter()
                .zip(x.iter())
                .map(|(g, x)| g * stable_sigmoid(*x))
                .collect()
        })
    }

    /// Softmax along `axis`, guarded against overflow by max subtraction.
    /// Each lane along the axis sums to one.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let lanes = Lanes::new(self.shape(), axis)?;
        let mut data = self.data().to_vec();
        lanes.for_each(|lane| {
            let max = lane.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &i in lane {
                data[i] = (data[i] - max).exp();
                z += data[i];
            }
            for &i in lane {
                data[i] /= z;
            }
        });
        let out = Rc::new(data.clone());
        let back_lanes = Lanes::new(self.shape(), axis)?;
        Ok(Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            let mut dx = vec![0.0; g.len()];
            back_lanes.for_each(|lane| {
                let inner: f64 = lane.iter().map(|&i| g[i] * out[i]).sum();
                for &i in lane {
                    dx[i] = out[i] * (g[i] - inner);
                }
            });
            dx
        }))
    }

    /// `ln(softmax)` along `axis`, computed via the log-sum-exp shift.
    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        let lanes = Lanes::new(self.shape(), axis)?;
        let mut data = self.data().to_vec();
        lanes.for_each(|lane| {
            let max = lane.iter().map(|&i| data[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + lane
                    .iter()
                    .map(|&i| (data[i] - max).exp())
                    .sum::<f64>()
                    .ln();
            for &i in lane {
                data[i] -= lse;
            }
        });
        let out = Rc::new(data.clone());
        let back_lanes = Lanes::new(self.shape(), axis)?;
        Ok(Tensor::record1(self, self.shape().to_vec(), data, move |g| {
            let mut dx = vec![0.0; g.len()];
            back_lanes.for_each(|lane| {
                let gsum: f64 = lane.iter().map(|&i| g[i]).sum();
                for &i in lane {
                    dx[i] = g[i] - out[i].exp() * gsum;
                }
            });
            dx
        }))
    }

    /// Valid (no padding) n-dimensional cross-correlation of this tensor
    /// with an n-cubic kernel. Output dimension `i` is `d_i - d + 1`.
    pub fn conv_nd(&self, kernel: &Tensor) -> Result<Tensor> {
        let rank = self.rank();
        if kernel.rank() != rank || rank == 0 {
            return Err(Error::ShapeMismatch(format!(
                "kernel rank {:?} against input rank {:?}",
                kernel.shape(),
                self.shape()
            )));
        }
        let d = kernel.shape()[0];
        if kernel.shape().iter().any(|&k| k != d) {
            return Err(Error::ShapeMismatch(format!(
                "kernel must be an n-cube, got {:?}",
                kernel.shape()
            )));
        }
        if self.shape().iter().any(|&n| n < d) {
            return Err(Error::ShapeMismatch(format!(
                "kernel width {d} exceeds input {:?}",
                self.shape()
            )));
        }
        let out_shape: Vec<usize> = self.shape().iter().map(|&n| n - d + 1).collect();
        let x_strides = strides(self.shape());
        let k_strides = strides(kernel.shape());
        let o_strides = strides(&out_shape);

        let mut data = vec![0.0; out_shape.iter().product()];
        for_each_index(&out_shape, |oi| {
            let mut acc = 0.0;
            for_each_index(kernel.shape(), |ki| {
                let xi: usize = oi
                    .iter()
                    .zip(ki)
                    .zip(&x_strides)
                    .map(|((o, k), s)| (o + k) * s)
                    .sum();
                acc += kernel.data()[flat_index(ki, &k_strides)] * self.data()[xi];
            });
            data[flat_index(oi, &o_strides)] = acc;
        });

        let x_data = self.data.clone();
        let k_data = kernel.data.clone();
        let x_shape = self.shape().to_vec();
        let k_shape = kernel.shape().to_vec();
        let out_shape_b = out_shape.clone();
        let (xs, ks, os) = (x_strides.clone(), k_strides.clone(), o_strides.clone());
        let x_len = self.len();
        let k_len = kernel.len();

        let conv_back = move |g: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut dx = vec![0.0; x_len];
            let mut dk = vec![0.0; k_len];
            for_each_index(&out_shape_b, |oi| {
                let go = g[flat_index(oi, &os)];
                if go == 0.0 {
                    return;
                }
                for_each_index(&k_shape, |ki| {
                    let xi: usize = oi
                        .iter()
                        .zip(ki)
                        .zip(&xs)
                        .map(|((o, k), s)| (o + k) * s)
                        .sum();
                    let kflat = flat_index(ki, &ks);
                    dk[kflat] += go * x_data[xi];
                    dx[xi] += go * k_data[kflat];
                });
            });
            let _ = &x_shape;
            (dx, dk)
        };
        let back_a = {
            let f = conv_back.clone();
            move |g: &[f64]| f(g).0
        };
        let back_b = move |g: &[f64]| conv_back(g).1;
        Tensor::record2(self, kernel, out_shape, data, back_a, back_b)
    }

    /// Causal 1-D convolution with dilation `l`: output index `t` combines
    /// taps at `t, t-l, ..., t-(d-1)l`, reading zeros before the start of
    /// the series. Output length equals input length, and `out[t]` never
    /// depends on `x[t' > t]`.
    pub fn causal_conv1d(&self, kernel: &Tensor, dilation: usize) -> Result<Tensor> {
        let ([t_len], [d]) = (self.shape(), kernel.shape()) else {
            return Err(Error::ShapeMismatch(format!(
                "causal_conv1d needs rank-1 series and kernel, got {:?} and {:?}",
                self.shape(),
                kernel.shape()
            )));
        };
        let (t_len, d) = (*t_len, *d);
        if dilation == 0 {
            return Err(Error::InvalidArgument("dilation must be >= 1".into()));
        }
        if d == 0 || (d - 1) * dilation + 1 > t_len {
            return Err(Error::ShapeMismatch(format!(
                "receptive field {} exceeds series length {t_len}",
                (d.max(1) - 1) * dilation + 1
            )));
        }
        // tap j reaches back (d-1-j) * dilation steps
        let reach = |t: usize, j: usize| -> Option<usize> {
            let back = (d - 1 - j) * dilation;
            t.checked_sub(back)
        };
        let mut data = vec![0.0; t_len];
        for (t, out) in data.iter_mut().enumerate() {
            for j in 0..d {
                if let Some(s) = reach(t, j) {
                    *out += kernel.data()[j] * self.data()[s];
                }
            }
        }
        let x = self.data.clone();
        let k = kernel.data.clone();
        let back_a = move |g: &[f64]| {
            let mut dx = vec![0.0; t_len];
            for (t, gt) in g.iter().enumerate() {
                for j in 0..d {
                    let back = (d - 1 - j) * dilation;
                    if let Some(s) = t.checked_sub(back) {
                        dx[s] += gt * k[j];
                    }
                }
            }
            dx
        };
        let back_b = move |g: &[f64]| {
            let mut dk = vec![0.0; d];
            for (t, gt) in g.iter().enumerate() {
                for (j, dkj) in dk.iter_mut().enumerate() {
                    let back = (d - 1 - j) * dilation;
                    if let Some(s) = t.checked_sub(back) {
                        *dkj += gt * x[s];
                    }
                }
            }
            dk
        };
        Tensor::record2(self, kernel, vec![t_len], data, back_a, back_b)
    }

    /// Tile pooling: partition every dimension into exact tiles of width
    /// `tile` and reduce each tile with the rule. Partial tiles are
    /// rejected rather than padded.
    pub fn pool(&self, tile: usize, rule: PoolRule) -> Result<Tensor> {
        if tile == 0 {
            return Err(Error::InvalidArgument("tile width must be >= 1".into()));
        }
        if self.rank() == 0 {
            return Err(Error::ShapeMismatch("pool needs rank >= 1".into()));
        }
        if let Some(&bad) = self.shape().iter().find(|&&n| n % tile != 0) {
            return Err(Error::ShapeMismatch(format!(
                "dimension {bad} not divisible by tile {tile}"
            )));
        }
        let out_shape: Vec<usize> = self.shape().iter().map(|&n| n / tile).collect();
        let tile_shape = vec![tile; self.rank()];
        let x_strides = strides(self.shape());
        let o_strides = strides(&out_shape);
        let tile_count: usize = tile_shape.iter().product();

        // Flat indices of each tile, in output order.
        let mut members: Vec<Vec<usize>> = Vec::with_capacity(out_shape.iter().product());
        for_each_index(&out_shape, |oi| {
            let mut tile_members = Vec::with_capacity(tile_count);
            for_each_index(&tile_shape, |ti| {
                let xi: usize = oi
                    .iter()
                    .zip(ti)
                    .zip(&x_strides)
                    .map(|((o, t), s)| (o * tile + t) * s)
                    .sum();
                tile_members.push(xi);
            });
            members.push(tile_members);
        });
        let _ = o_strides;

        let x = self.data.clone();
        let x_len = self.len();
        let data: Vec<f64> = members
            .iter()
            .map(|m| match rule {
                PoolRule::Max => m.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max),
                PoolRule::Avg => m.iter().map(|&i| x[i]).sum::<f64>() / tile_count as f64,
                PoolRule::L2 => m.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt(),
            })
            .collect();
        let out = Rc::new(data.clone());
        Ok(Tensor::record1(self, out_shape, data, move |g| {
            let mut dx = vec![0.0; x_len];
            for (slot, m) in members.iter().enumerate() {
                match rule {
                    PoolRule::Max => {
                        let arg = m
                            .iter()
                            .copied()
                            .max_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap())
                            .unwrap();
                        dx[arg] += g[slot];
                    }
                    PoolRule::Avg => {
                        for &i in m {
                            dx[i] += g[slot] / tile_count as f64;
                        }
                    }
                    PoolRule::L2 => {
                        if out[slot] > 0.0 {
                            for &i in m {
                                dx[i] += g[slot] * x[i] / out[slot];
                            }
                        }
                    }
                }
            }
            dx
        }))
    }
}

/// Concatenate tensors along `axis`; all other dimensions must agree.
pub fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let Some(first) = inputs.first() else {
        return Err(Error::InvalidArgument("concat of zero tensors".into()));
    };
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::InvalidArgument(format!(
            "concat axis {axis} for rank {rank}"
        )));
    }
    for t in inputs {
        if t.rank() != rank {
            return Err(Error::ShapeMismatch("concat rank mismatch".into()));
        }
        for (ax, (a, b)) in t.shape().iter().zip(first.shape()).enumerate() {
            if ax != axis && a != b {
                return Err(Error::ShapeMismatch(format!(
                    "concat shapes {:?} vs {:?} differ off-axis",
                    t.shape(),
                    first.shape()
                )));
            }
        }
    }
    let axis_total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut out_shape = first.shape().to_vec();
    out_shape[axis] = axis_total;

    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut data = vec![0.0; out_shape.iter().product()];
    let mut offset = 0usize;
    let mut spans = Vec::with_capacity(inputs.len());
    for t in inputs {
        let span = t.shape()[axis] * inner;
        for o in 0..outer {
            let src = &t.data()[o * span..(o + 1) * span];
            let dst_start = o * axis_total * inner + offset;
            data[dst_start..dst_start + span].copy_from_slice(src);
        }
        spans.push((offset, span));
        offset += span;
    }

    let shapes: Vec<(usize, usize)> = spans; // (offset within a lane, span)
    Tensor::record_many(inputs, out_shape, data, move |g| {
        shapes
            .iter()
            .map(|&(off, span)| {
                let mut part = vec![0.0; outer * span];
                for o in 0..outer {
                    let src_start = o * axis_total * inner + off;
                    part[o * span..(o + 1) * span]
                        .copy_from_slice(&g[src_start..src_start + span]);
                }
                part
            })
            .collect()
    })
}

/// Concatenate two rank-2 tensors side by side (shared row count).
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    concat(&[a, b], 1)
}

/// Stack rank-2 tensors vertically (shared column count).
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    concat(parts, 0)
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f64], p: usize, q: usize, b: &[f64], r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        for k in 0..q {
            let av = a[i * q + k];
            if av == 0.0 {
                continue;
            }
            for j in 0..r {
                out[i * r + j] += av * b[k * r + j];
            }
        }
    }
    out
}

/// Index lanes along one axis of a shape: every combination of the other
/// dimensions yields one lane of flat indices.
struct Lanes {
    lanes: Vec<Vec<usize>>,
}

impl Lanes {
    fn new(shape: &[usize], axis: usize) -> Result<Self> {
        if shape.is_empty() || axis >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "axis {axis} invalid for shape {shape:?}"
            )));
        }
        let st = strides(shape);
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let m = shape[axis];
        let mut lanes = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * m * inner + i;
                lanes.push((0..m).map(|k| base + k * st[axis] / 1).collect());
            }
        }
        Ok(Lanes { lanes })
    }

    fn for_each(&self, mut f: impl FnMut(&[usize])) {
        for lane in &self.lanes {
            f(lane);
        }
    }
}
