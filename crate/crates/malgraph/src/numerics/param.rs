//! Trainable parameters and the store that owns them.
//!
//! Models hold `ParamId` handles; the store owns values, gradient buffers and
//! Adam moments. Keeping parameters out of the model structs means the
//! optimizer, checkpointing and gradient checking can all iterate one flat
//! collection, and the training loop stays the single writer.

use super::tensor::Tensor2;

/// One trainable tensor with its gradient and Adam state.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    pub adam_m: Tensor2,
    pub adam_v: Tensor2,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Tensor2::zeros(r, c),
            adam_m: Tensor2::zeros(r, c),
            adam_v: Tensor2::zeros(r, c),
            step_count: 0,
        }
    }
}

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Flat, named collection of parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name `{name}`"
        );
        self.names.push(name);
        self.params.push(Param::new(value));
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    /// Adds `delta` into the gradient buffer of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor2) {
        self.params[id.0].grad.add_assign(delta);
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.values_mut().fill(0.0);
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(|n| n.as_str()).zip(self.params.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.names.iter().map(|n| n.as_str()).zip(self.params.iter_mut())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalar entries across all parameters.
    pub fn total_entries(&self) -> usize {
        self.params.iter().map(|p| p.value.values().len()).sum()
    }

    /// Copies of all current values, in store order.
    pub fn snapshot_values(&self) -> Vec<Tensor2> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Restores values from a snapshot taken on the same store layout.
    pub fn restore_values(&mut self, snapshot: &[Tensor2]) {
        assert_eq!(snapshot.len(), self.params.len(), "snapshot layout mismatch");
        for (p, s) in self.params.iter_mut().zip(snapshot.iter()) {
            assert_eq!(p.value.shape(), s.shape(), "snapshot shape mismatch");
            p.value = s.clone();
        }
    }
}
