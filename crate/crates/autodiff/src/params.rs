use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::real::Real;
use crate::tensor::Tensor;

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; returns its index. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Tensor<T> {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.tensors[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }

    /// Places every tensor on the graph, as trainable leaves or as constants.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| graph.leaf(t.clone(), trainable)).collect()
    }

    /// Checks that `grads` line up one-to-one with the parameters.
    pub fn check_grads(&self, grads: &[Vec<T>]) -> Result<()> {
        if grads.len() != self.tensors.len() {
            return Err(shape_err("params", format!("{} gradients for {} parameters", grads.len(), self.tensors.len())));
        }
        for ((g, t), name) in grads.iter().zip(&self.tensors).zip(&self.names) {
            if g.len() != t.numel() {
                return Err(shape_err("params", format!("gradient for {name} has {} entries, expected {}", g.len(), t.numel())));
            }
        }
        Ok(())
    }
}
