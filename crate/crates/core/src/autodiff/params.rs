use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::array::{NdArray, Real};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Named parameter arrays in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T: Real = f32> {
    names: Vec<String>,
    values: Vec<NdArray<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Default for Params<T> {
    fn default() -> Self {
        Params { names: Vec::new(), values: Vec::new(), index: HashMap::new() }
    }
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NdArray<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NdArray<T>> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn require(&self, name: &str) -> Result<&NdArray<T>> {
        self.get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NdArray<T>> {
        self.index.get(name).map(|&i| &mut self.values[i])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[NdArray<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [NdArray<T>] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NdArray<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(NdArray::len).sum()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            values: self.values.iter().map(NdArray::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Registers every parameter as a tracked leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        let vars = self.values.iter().map(|v| tape.param(v.clone())).collect();
        BoundParams { vars, index: self.index.clone() }
    }
}

/// Tape handles of a [`Params`] set, aligned with its order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Gradients in parameter order; `None` where backward never reached a parameter.
    pub fn grads<T: Real>(&self, tape: &Tape<T>) -> Vec<Option<NdArray<T>>> {
        self.vars.iter().map(|&v| tape.grad(v).cloned()).collect()
    }

    /// Like [`grads`](Self::grads) but unreachable parameters get an explicit zero gradient.
    pub fn grads_or_zero<T: Real>(&self, tape: &Tape<T>) -> Vec<Option<NdArray<T>>> {
        self.vars
            .iter()
            .map(|&v| Some(tape.grad(v).cloned().unwrap_or_else(|| NdArray::zeros(tape.value(v).shape()))))
            .collect()
    }
}

/// He (fan-in) normal initialisation: `N(0, 2 / fan_in)`.
pub fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> NdArray<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    NdArray::from_fn(shape, |_| T::lit(dist.sample(rng)))
}
