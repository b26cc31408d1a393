use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Result, SaniError};

/// Ordered, named collection of parameter tensors.
///
/// Enumeration order is the insertion order and never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// SHA-256 of one tensor's shape and little-endian values.
    pub fn tensor_digest(&self, index: usize) -> String {
        let t = &self.tensors[index];
        let mut h = Sha256::new();
        for d in t.shape() {
            h.update((*d as u64).to_le_bytes());
        }
        h.update(t.to_le_bytes());
        hex::encode(h.finalize())
    }

    pub fn replace(&mut self, index: usize, tensor: Tensor) -> Result<()> {
        if !self.tensors[index].same_shape(&tensor) {
            return Err(SaniError::ShapeMismatch {
                op: "replace",
                detail: format!(
                    "{}: {:?} vs {:?}",
                    self.names[index],
                    self.tensors[index].shape(),
                    tensor.shape()
                ),
            });
        }
        self.tensors[index] = tensor;
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients keyed by the parameter names of the store that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    names: Vec<String>,
    grads: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            names: store.names().to_vec(),
            grads: store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub(crate) fn from_parts(names: Vec<String>, grads: Vec<Tensor>) -> Self {
        Self { names, grads }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.grads[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// `self += other * scale`.
    pub fn accumulate(&mut self, other: &GradientSet, scale: f64) {
        debug_assert_eq!(self.names, other.names);
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            g.add_scaled(o, scale);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}
