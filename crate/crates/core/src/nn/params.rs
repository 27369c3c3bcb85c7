//! Named parameter storage and per-iteration tape bindings.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named parameter tensors. Order is fixed at
/// construction and shared by optimizer state and checkpoints.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> ParamId {
        debug_assert!(
            !self.entries.iter().any(|p| p.name == name),
            "duplicate parameter name {name}"
        );
        self.entries.push(Param { name: name.to_string(), tensor });
        ParamId(self.entries.len() - 1)
    }

    /// He-style uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
    pub fn register_fan_in(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let limit = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        self.register(name, Tensor::new(shape, data))
    }

    /// Small uniform init for projection layers: U(-1/sqrt(fan_in), ..).
    pub fn register_small(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let limit = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        self.register(name, Tensor::new(shape, data))
    }

    pub fn register_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        self.register(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.entries.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }
}

/// Maps every parameter of a [`ParamSet`] to a tracked leaf on one tape.
/// Rebuilt at the start of each forward pass.
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn bind_all(params: &ParamSet, tape: &mut Tape) -> Self {
        let vars = params.entries.iter().map(|p| tape.leaf(p.tensor.clone())).collect();
        Binding { vars }
    }

    /// Bind as constants: forward evaluation only, no gradients tracked.
    pub fn bind_frozen(params: &ParamSet, tape: &mut Tape) -> Self {
        let vars = params.entries.iter().map(|p| tape.constant(p.tensor.clone())).collect();
        Binding { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}
