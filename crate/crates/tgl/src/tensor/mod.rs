//! Dense tensors with a minimal reverse-mode autodiff tape.
//!
//! A [`Tensor`] is an n-dimensional `f64` array. Tensors are immutable;
//! every operation produces a new tensor. When an input is registered on a
//! [`Tape`] (directly via [`Tape::leaf`] or transitively through an
//! operation), the operation records how to push gradients back to its
//! parents. Calling [`Tensor::backward`] on a tracked scalar then yields a
//! [`Gradients`] table holding the gradient of that scalar with respect to
//! every tracked tensor.
//!
//! The tape is built per forward pass and thrown away afterwards: no graph
//! reuse, no higher-order derivatives. It lives behind an `Rc`, so tracked
//! tensors are cheap to clone but stay on the thread that owns their tape.
//! Untracked tensors are plain data.

mod ops;

pub use ops::{concat, concat_cols, concat_rows, Activation, PoolRule};

use crate::{Error, Matrix, Result};
use std::cell::RefCell;
use std::rc::Rc;

type BackFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct Node {
    parents: Vec<usize>,
    back: BackFn,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
}

/// Records operations for one forward pass.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Register a tensor as a differentiable leaf on this tape.
    pub fn leaf(&self, value: &Tensor) -> Tensor {
        let id = self.push(Vec::new(), Box::new(|_| Vec::new()));
        Tensor {
            shape: value.shape.clone(),
            data: value.data.clone(),
            track: Some(Tracked {
                tape: self.clone(),
                id,
            }),
        }
    }

    fn push(&self, parents: Vec<usize>, back: BackFn) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { parents, back });
        inner.nodes.len() - 1
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

#[derive(Clone)]
struct Tracked {
    tape: Tape,
    id: usize,
}

/// Dense n-dimensional array of `f64`, optionally tracked on a tape.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    track: Option<Tracked>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .field("tracked", &self.track.is_some())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} holds {} entries, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            track: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: Rc::new(vec![0.0; shape.iter().product()]),
            track: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: Rc::new(vec![value; shape.iter().product()]),
            track: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: Rc::new(vec![v]),
            track: None,
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Tensor {
            shape: vec![v.len()],
            data: Rc::new(v.to_vec()),
            track: None,
        }
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Tensor {
            shape: vec![m.rows(), m.cols()],
            data: Rc::new(m.data().to_vec()),
            track: None,
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        match self.shape.as_slice() {
            [r, c] => Matrix::from_vec(*r, *c, self.data.as_ref().clone()),
            [n] => Matrix::from_vec(*n, 1, self.data.as_ref().clone()),
            _ => Err(Error::ShapeMismatch(format!(
                "cannot view shape {:?} as a matrix",
                self.shape
            ))),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_tracked(&self) -> bool {
        self.track.is_some()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-entry tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::ShapeMismatch(format!(
                "item() on shape {:?}",
                self.shape
            )))
        }
    }

    /// Detach from the tape: same data, no gradient participation.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            track: None,
        }
    }

    /// Run reverse-mode accumulation from this scalar. Gradients flow to
    /// every tracked tensor that contributed to it; each tape node is
    /// visited once, in reverse recording order.
    pub fn backward(&self) -> Result<Gradients> {
        let tracked = self.track.as_ref().ok_or_else(|| {
            Error::InvalidArgument("backward from an untracked tensor".into())
        })?;
        if self.data.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape
            )));
        }
        let inner = tracked.tape.inner.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; inner.nodes.len()];
        grads[tracked.id] = Some(vec![1.0]);
        for id in (0..=tracked.id).rev() {
            let Some(upstream) = grads[id].clone() else {
                continue;
            };
            let node = &inner.nodes[id];
            if node.parents.is_empty() {
                continue;
            }
            let contributions = (node.back)(&upstream);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (&pid, contrib) in node.parents.iter().zip(contributions) {
                match &mut grads[pid] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(Gradients {
            tape: tracked.tape.clone(),
            grads,
        })
    }

    fn tracked(&self) -> Option<&Tracked> {
        self.track.as_ref()
    }

    fn untracked(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor {
            shape,
            data: Rc::new(data),
            track: None,
        }
    }

    /// Record a one-parent operation.
    fn record1(
        parent: &Tensor,
        shape: Vec<usize>,
        data: Vec<f64>,
        back: impl Fn(&[f64]) -> Vec<f64> + 'static,
    ) -> Tensor {
        match parent.tracked() {
            None => Tensor::untracked(shape, data),
            Some(t) => {
                let id = t.tape.push(vec![t.id], Box::new(move |g| vec![back(g)]));
                Tensor {
                    shape,
                    data: Rc::new(data),
                    track: Some(Tracked {
                        tape: t.tape.clone(),
                        id,
                    }),
                }
            }
        }
    }

    /// Record a two-parent operation; each closure maps the upstream
    /// gradient to the gradient for that parent.
    fn record2(
        a: &Tensor,
        b: &Tensor,
        shape: Vec<usize>,
        data: Vec<f64>,
        back_a: impl Fn(&[f64]) -> Vec<f64> + 'static,
        back_b: impl Fn(&[f64]) -> Vec<f64> + 'static,
    ) -> Result<Tensor> {
        let tape = match (a.tracked(), b.tracked()) {
            (Some(ta), Some(tb)) => {
                if !ta.tape.same_tape(&tb.tape) {
                    return Err(Error::InvalidArgument(
                        "operands recorded on different tapes".into(),
                    ));
                }
                Some(ta.tape.clone())
            }
            (Some(ta), None) => Some(ta.tape.clone()),
            (None, Some(tb)) => Some(tb.tape.clone()),
            (None, None) => None,
        };
        let Some(tape) = tape else {
            return Ok(Tensor::untracked(shape, data));
        };
        let (parents, back): (Vec<usize>, BackFn) = match (a.tracked(), b.tracked()) {
            (Some(ta), Some(tb)) => (
                vec![ta.id, tb.id],
                Box::new(move |g| vec![back_a(g), back_b(g)]),
            ),
            (Some(ta), None) => (vec![ta.id], Box::new(move |g| vec![back_a(g)])),
            (None, Some(tb)) => (vec![tb.id], Box::new(move |g| vec![back_b(g)])),
            (None, None) => unreachable!(),
        };
        let id = tape.push(parents, back);
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            track: Some(Tracked { tape, id }),
        })
    }

    /// Record an operation over many parents (used by concatenation).
    fn record_many(
        inputs: &[&Tensor],
        shape: Vec<usize>,
        data: Vec<f64>,
        back: impl Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Result<Tensor> {
        let mut tape: Option<Tape> = None;
        for t in inputs {
            if let Some(tr) = t.tracked() {
                match &tape {
                    None => tape = Some(tr.tape.clone()),
                    Some(existing) if !existing.same_tape(&tr.tape) => {
                        return Err(Error::InvalidArgument(
                            "operands recorded on different tapes".into(),
                        ));
                    }
                    _ => {}
                }
            }
        }
        let Some(tape) = tape else {
            return Ok(Tensor::untracked(shape, data));
        };
        // The backward closure produces one slice per input; keep only the
        // tracked ones, in input order.
        let tracked_slots: Vec<usize> = inputs
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_tracked())
            .map(|(i, _)| i)
            .collect();
        let parents: Vec<usize> = inputs
            .iter()
            .filter_map(|t| t.tracked().map(|tr| tr.id))
            .collect();
        let slots = tracked_slots.clone();
        let id = tape.push(
            parents,
            Box::new(move |g| {
                let all = back(g);
                slots.iter().map(|&i| all[i].clone()).collect()
            }),
        );
        Ok(Tensor {
            shape,
            data: Rc::new(data),
            track: Some(Tracked { tape, id }),
        })
    }
}

/// Gradient table produced by [`Tensor::backward`].
pub struct Gradients {
    tape: Tape,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `t`. Tensors on the tape that
    /// did not influence the loss get a zero gradient; untracked tensors
    /// (or tensors from another tape) get `None`.
    pub fn wrt(&self, t: &Tensor) -> Option<Tensor> {
        let tr = t.tracked()?;
        if !tr.tape.same_tape(&self.tape) || tr.id >= self.grads.len() {
            return None;
        }
        let data = match &self.grads[tr.id] {
            Some(g) => g.clone(),
            None => vec![0.0; t.len()],
        };
        Some(Tensor::untracked(t.shape.to_vec(), data))
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub(crate) fn flat_index(idx: &[usize], stride: &[usize]) -> usize {
    idx.iter().zip(stride).map(|(i, s)| i * s).sum()
}

/// Visit every multi-index of an n-dimensional box in row-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn backward_requires_tracked_scalar() {
        let x = Tensor::vector(&[1.0, 2.0]);
        assert!(x.backward().is_err());
        let tape = Tape::new();
        let x = tape.leaf(&x);
        assert!(matches!(x.backward(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn quadratic_gradient() {
        // loss = w . w at w = [1, 2] has gradient 2w = [2, 4]
        let tape = Tape::new();
        let w = tape.leaf(&Tensor::vector(&[1.0, 2.0]));
        let loss = w.hadamard(&w).unwrap().sum();
        assert_abs_diff_eq!(loss.item().unwrap(), 5.0, epsilon = 1e-12);
        let grads = loss.backward().unwrap();
        let gw = grads.wrt(&w).unwrap();
        assert_eq!(gw.data(), &[2.0, 4.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let tape = Tape::new();
        let w = tape.leaf(&Tensor::vector(&[0.0, 0.0, 0.0]));
        let loss = w.sigmoid().sum();
        let grads = loss.backward().unwrap();
        for g in grads.wrt(&w).unwrap().data() {
            assert_abs_diff_eq!(*g, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x*x) + sum(x): grad = 2x + 1
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::vector(&[3.0]));
        let loss = x.hadamard(&x).unwrap().sum().add(&x.sum()).unwrap();
        let g = loss.backward().unwrap().wrt(&x).unwrap();
        assert_abs_diff_eq!(g.data()[0], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(&Tensor::vector(&[1.0]));
        let y = tape.leaf(&Tensor::vector(&[2.0]));
        let loss = x.sum();
        let grads = loss.backward().unwrap();
        assert_eq!(grads.wrt(&y).unwrap().data(), &[0.0]);
    }

    #[test]
    fn cross_tape_ops_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t1.leaf(&Tensor::vector(&[1.0]));
        let b = t2.leaf(&Tensor::vector(&[1.0]));
        assert!(matches!(a.add(&b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn multi_index_iteration_is_row_major() {
        let mut seen = Vec::new();
        for_each_index(&[2, 3], |idx| seen.push((idx[0], idx[1])));
        assert_eq!(
            seen,
            vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
        );
    }
}
