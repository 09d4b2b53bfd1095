//! Named parameter store for a model.
//!
//! Parameters are registered once, in a fixed order, and addressed by
//! [`ParamId`] afterwards; iteration order is registration order, which
//! keeps initialization draws, optimizer state, and checkpoint layout
//! deterministic. Each entry carries a `decay` flag so the optimizer can
//! exempt biases and layernorm gains from weight decay.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

struct Entry {
    name: String,
    tensor: Tensor,
    decay: bool,
}

#[derive(Default)]
pub struct Params {
    entries: Vec<Entry>,
}

impl Params {
    pub fn new() -> Self {
        Params {
            entries: Vec::new(),
        }
    }

    /// Registers a trainable tensor under a unique dotted name.
    /// `decay` controls whether weight decay applies to it.
    pub fn register(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor,
        decay: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::contract(
                "Params::register",
                format!("duplicate parameter name {name:?}"),
            ));
        }
        self.entries.push(Entry {
            name,
            tensor: tensor.with_requires_grad(true),
            decay,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters across all tensors.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.entries[id.0].decay
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.tensor))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(ParamId)
    }

    /// Clears the gradient of every parameter.
    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.tensor.set_grad(None);
        }
    }

    /// Replaces values from `(name, tensor)` pairs; the name sets must
    /// match exactly and every shape must agree.
    pub fn load_values(&mut self, values: &[(String, Tensor)]) -> Result<()> {
        if values.len() != self.entries.len() {
            return Err(Error::checkpoint(format!(
                "parameter count mismatch: model has {}, checkpoint has {}",
                self.entries.len(),
                values.len()
            )));
        }
        for (name, tensor) in values {
            let id = self.find(name).ok_or_else(|| {
                Error::checkpoint(format!(
                    "checkpoint tensor {name:?} has no matching model parameter"
                ))
            })?;
            let current = self.get(id);
            if current.shape() != tensor.shape() {
                return Err(Error::checkpoint(format!(
                    "shape mismatch for {name:?}: model {:?}, checkpoint {:?}",
                    current.shape(),
                    tensor.shape()
                )));
            }
            *self.get_mut(id) = tensor.clone().with_requires_grad(true);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_rejects_duplicates() {
        let mut p = Params::new();
        p.register("w", Tensor::zeros(vec![2]), true).unwrap();
        assert!(p.register("w", Tensor::zeros(vec![2]), true).is_err());
    }

    #[test]
    fn load_values_checks_names_and_shapes() {
        let mut p = Params::new();
        p.register("w", Tensor::zeros(vec![2]), true).unwrap();
        let wrong_name = vec![("v".to_string(), Tensor::zeros(vec![2]))];
        assert!(p.load_values(&wrong_name).is_err());
        let wrong_shape = vec![("w".to_string(), Tensor::zeros(vec![3]))];
        assert!(p.load_values(&wrong_shape).is_err());
        let ok = vec![(
            "w".to_string(),
            Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(),
        )];
        p.load_values(&ok).unwrap();
        assert_eq!(p.get(ParamId(0)).data(), &[1.0, 2.0]);
    }
}
