//! Named parameter tensors with deterministic, seeded initialization.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// All learned tensors of a model, in a fixed registration order.
#[derive(Clone, Debug)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.by_name.insert(name.clone(), self.tensors.len());
        self.names.push(name);
        self.tensors.push(tensor);
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

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.by_name.get(name).copied().map(move |i| &mut self.tensors[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|n| n.as_str()).zip(self.tensors.iter())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }

    /// Record every parameter on `tape`, in registration order.
    pub fn bind<'a, 't>(&'a self, tape: &'t Tape) -> BoundParams<'a, 't> {
        BoundParams {
            set: self,
            vars: self.tensors.iter().map(|t| tape.input(t)).collect(),
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Tape handles for a bound [`ParamSet`], resolvable by name.
pub struct BoundParams<'a, 't> {
    set: &'a ParamSet,
    vars: Vec<Var<'t>>,
}

impl<'a, 't> BoundParams<'a, 't> {
    pub fn var(&self, name: &str) -> Result<Var<'t>> {
        self.set
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    pub fn set(&self) -> &'a ParamSet {
        self.set
    }
}

/// Registers parameters with uniform(-0.1, 0.1) weights and zero biases,
/// drawing from a seeded stream so construction order fixes every value.
pub struct ParamBuilder {
    set: ParamSet,
    rng: ChaCha8Rng,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            set: ParamSet::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn weight(&mut self, name: impl Into<String>, shape: &[usize]) {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-0.1..0.1)).collect();
        self.set
            .add(name, Tensor::new(shape.to_vec(), data).expect("builder shape"));
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) {
        self.set.add(name, Tensor::zeros(shape.to_vec()));
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: &[usize]) {
        let n: usize = shape.iter().product();
        self.set.add(
            name,
            Tensor::new(shape.to_vec(), vec![1.0; n]).expect("builder shape"),
        );
    }

    pub fn finish(self) -> ParamSet {
        self.set
    }
}
