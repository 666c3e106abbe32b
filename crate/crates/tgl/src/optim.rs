//! Named parameter collections and the Adam update.
//!
//! Layers keep their weights in a [`ParamSet`]: an ordered name -> tensor
//! map. One training step looks like
//!
//! ```ignore
//! let tape = Tape::new();
//! let tracked = params.track(&tape);
//! let loss = model_forward(&tracked, ...)?;
//! let grads = tracked.grads(&loss.backward()?);
//! adam.step(&mut params, &grads, &mut state)?;
//! ```

use crate::tensor::{Gradients, Tape, Tensor};
use crate::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Ordered collection of named parameter tensors (untracked values).
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.map.insert(name.into(), value.detach());
    }

    /// Panics on an unknown name: layer code always creates the parameters
    /// it reads.
    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_entries(&self) -> usize {
        self.map.values().map(Tensor::len).sum()
    }

    /// Register every parameter as a leaf on `tape`.
    pub fn track(&self, tape: &Tape) -> TrackedParams {
        TrackedParams {
            map: self
                .map
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v)))
                .collect(),
        }
    }

    /// Concatenate all entries in name order into one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_entries());
        for v in self.map.values() {
            out.extend_from_slice(v.data());
        }
        out
    }

    /// Rebuild a set with this set's names and shapes from a flat vector.
    /// `unflatten(flatten())` reproduces the set exactly.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParamSet> {
        if flat.len() != self.num_entries() {
            return Err(Error::ShapeMismatch(format!(
                "flat vector of {} entries against parameter set of {}",
                flat.len(),
                self.num_entries()
            )));
        }
        let mut map = BTreeMap::new();
        let mut offset = 0;
        for (k, v) in &self.map {
            let next = offset + v.len();
            map.insert(
                k.clone(),
                Tensor::new(v.shape().to_vec(), flat[offset..next].to_vec())?,
            );
            offset = next;
        }
        Ok(ParamSet { map })
    }

    /// Replace a parameter's values, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let old = self
            .map
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?;
        if old.shape() != value.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {name:?}: {:?} vs {:?}",
                old.shape(),
                value.shape()
            )));
        }
        self.map.insert(name.to_string(), value.detach());
        Ok(())
    }
}

/// Tape-registered view of a [`ParamSet`].
pub struct TrackedParams {
    map: BTreeMap<String, Tensor>,
}

impl TrackedParams {
    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Pull this set's gradients out of a backward pass; parameters that
    /// did not influence the loss get zeros.
    pub fn grads(&self, gradients: &Gradients) -> BTreeMap<String, Tensor> {
        self.map
            .iter()
            .map(|(k, v)| {
                let g = gradients
                    .wrt(v)
                    .unwrap_or_else(|| Tensor::zeros(v.shape()));
                (k.clone(), g)
            })
            .collect()
    }
}

/// Read access to named parameters; layer forward passes are generic over
/// this so the same code runs on plain values and on tape-tracked leaves.
pub trait ParamView {
    fn param(&self, name: &str) -> &Tensor;
}

impl ParamView for ParamSet {
    fn param(&self, name: &str) -> &Tensor {
        self.get(name)
    }
}

impl ParamView for TrackedParams {
    fn param(&self, name: &str) -> &Tensor {
        self.get(name)
    }
}

/// First/second-moment state carried between Adam steps.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// Adam optimizer with the usual defaults.
#[derive(Debug, Clone, Copy)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// One in-place update of every parameter present in `grads`.
    pub fn step(
        &self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Tensor>,
        state: &mut AdamState,
    ) -> Result<()> {
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, grad) in grads {
            let current = params
                .map
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?;
            if current.shape() != grad.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for {name:?}: {:?} vs {:?}",
                    grad.shape(),
                    current.shape()
                )));
            }
            let m = state
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = state
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let mut data = current.data().to_vec();
            for i in 0..data.len() {
                let g = grad.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            let shape = current.shape().to_vec();
            params.map.insert(name.clone(), Tensor::new(shape, data)?);
        }
        Ok(())
    }
}

/// Glorot-uniform matrix initialisation.
pub fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data by construction")
}

/// Uniform vector in `[-bound, bound]`.
pub fn uniform_vector(rng: &mut ChaCha8Rng, len: usize, bound: f64) -> Tensor {
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::vector(&data)
}
