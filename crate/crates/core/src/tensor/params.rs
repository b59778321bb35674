//! Named parameter registry shared by every learned component.
//!
//! Models register their weights once, at construction, and hold opaque
//! [`ParamId`]s. Each forward pass binds the current values to a tape
//! ([`ParamStore::bind`] for training, [`ParamStore::bind_constants`] for
//! inference), so the persistent store stays plain data — easy to clone,
//! serialize, and feed to the optimizer in a fixed order.

use ndarray::ArrayD;

use super::{Gradients, Tape, Tensor};

/// Index of one named parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Ordered collection of named parameter arrays. Registration order is the
/// canonical order for optimizer state and checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f64>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "parameter name {name:?} registered twice"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Bind every parameter to `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &Tape) -> BoundParams {
        BoundParams { tensors: self.values.iter().map(|v| tape.leaf(v.clone())).collect() }
    }

    /// Bind every parameter as an untracked constant (inference path).
    pub fn bind_constants(&self) -> BoundParams {
        BoundParams { tensors: self.values.iter().map(|v| Tensor::constant(v.clone())).collect() }
    }
}

/// Per-forward-pass view of a [`ParamStore`]: one tensor per parameter, in
/// store order.
pub struct BoundParams {
    pub tensors: Vec<Tensor>,
}

impl BoundParams {
    /// Wrap raw tensors (e.g. gradient-check leaves) in store order.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        BoundParams { tensors }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Gradients for every parameter after a backward pass, zeros where a
    /// parameter did not participate.
    pub fn gradients(&self, grads: &Gradients) -> Vec<ArrayD<f64>> {
        self.tensors.iter().map(|t| grads.get_or_zero(t)).collect()
    }
}
