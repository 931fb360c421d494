use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a parameter inside a specific [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    store: u64,
    index: usize,
}

impl ParamId {
    pub fn index(&self) -> usize {
        self.index
    }

    pub(crate) fn store_id(&self) -> u64 {
        self.store
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered collection of named trainable tensors.
///
/// Registration order is stable and is the order used by checkpoints and
/// optimizers. A frozen store hands out constants to the tape and refuses
/// optimizer updates. Clones share the layout and therefore the handles.
#[derive(Clone, Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
    frozen: bool,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            by_name: HashMap::new(),
            frozen: false,
        }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let index = self.params.len();
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), index);
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId { store: self.id, index })
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&index| ParamId { store: self.id, index })
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(|index| ParamId { store: self.id, index })
    }

    fn check(&self, id: ParamId) -> usize {
        assert_eq!(id.store, self.id, "parameter handle from a different store");
        id.index
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[self.check(id)]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.get(id).value
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    /// Mutable access to a value. Frozen stores refuse.
    pub fn value_mut(&mut self, id: ParamId) -> Result<&mut Tensor> {
        if self.frozen {
            return Err(Error::Contract(format!(
                "parameter `{}` belongs to a frozen store",
                self.params[id.index].name
            )));
        }
        let i = self.check(id);
        Ok(&mut self.params[i].value)
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        let i = self.check(id);
        &mut self.params[i].grad
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    /// Mutable iteration for optimizers; fails on a frozen store.
    pub fn params_mut(&mut self) -> Result<&mut [Parameter]> {
        if self.frozen {
            return Err(Error::Contract("cannot update a frozen parameter store".into()));
        }
        Ok(&mut self.params)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// SHA-256 over names, shapes and little-endian values in store order.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.register("w", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(s.register("w", Tensor::zeros(&[3])), Err(Error::Contract(_))));
        assert_eq!(s.by_name("w").unwrap().grad.shape(), &[2]);
    }

    #[test]
    fn frozen_store_refuses_updates() {
        let mut s = ParamStore::new();
        let id = s.register("w", Tensor::zeros(&[2])).unwrap();
        s.freeze();
        assert!(s.value_mut(id).is_err());
        assert!(s.params_mut().is_err());
    }

    #[test]
    fn hash_tracks_values() {
        let mut s = ParamStore::new();
        let id = s.register("w", Tensor::zeros(&[2])).unwrap();
        let h0 = s.content_hash();
        assert_eq!(h0, s.clone().content_hash());
        s.value_mut(id).unwrap().data_mut()[1] = 1e-300;
        assert_ne!(h0, s.content_hash());
    }
}
