//! One network definition, two ways to run it: recorded on a [`Tape`] for
//! training, or eagerly for inference where intermediate values are dropped
//! as soon as they go out of scope. Both paths call the same kernels, so
//! their forward values are bit-identical.

use super::array::{NdArray, Real};
use super::kernels;
use super::params::{BoundParams, Params};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Operations a network body needs. Layers refer to parameters by name:
/// `{layer}.weight` and `{layer}.bias`.
pub trait Exec<T: Real> {
    type Node;

    fn input(&mut self, value: NdArray<T>) -> Self::Node;
    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a NdArray<T>;
    fn conv3x3(&mut self, x: &Self::Node, layer: &str) -> Result<Self::Node>;
    fn conv1x1(&mut self, x: &Self::Node, layer: &str) -> Result<Self::Node>;
    fn relu(&mut self, x: Self::Node) -> Self::Node;
    fn sigmoid(&mut self, x: Self::Node) -> Self::Node;
    fn max_pool2(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn upsample2(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn concat(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn slice(&mut self, x: &Self::Node, start: usize, len: usize) -> Result<Self::Node>;
}

fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

/// Records every op on a tape with parameters bound as tracked leaves.
pub struct TapeExec<'a, T: Real> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a BoundParams,
}

impl<'a, T: Real> TapeExec<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a BoundParams) -> Self {
        TapeExec { tape, params }
    }
}

impl<T: Real> Exec<T> for TapeExec<'_, T> {
    type Node = Var;

    fn input(&mut self, value: NdArray<T>) -> Var {
        self.tape.constant(value)
    }

    fn value<'a>(&'a self, node: &'a Var) -> &'a NdArray<T> {
        self.tape.value(*node)
    }

    fn conv3x3(&mut self, x: &Var, layer: &str) -> Result<Var> {
        let k = self.params.var(&weight_name(layer))?;
        let b = self.params.var(&bias_name(layer))?;
        self.tape.conv2d(*x, k, b)
    }

    fn conv1x1(&mut self, x: &Var, layer: &str) -> Result<Var> {
        let k = self.params.var(&weight_name(layer))?;
        let b = self.params.var(&bias_name(layer))?;
        self.tape.conv1x1(*x, k, b)
    }

    fn relu(&mut self, x: Var) -> Var {
        self.tape.relu(x)
    }

    fn sigmoid(&mut self, x: Var) -> Var {
        self.tape.sigmoid(x)
    }

    fn max_pool2(&mut self, x: &Var) -> Result<Var> {
        self.tape.max_pool2(*x)
    }

    fn upsample2(&mut self, x: &Var) -> Result<Var> {
        self.tape.upsample2(*x)
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.tape.concat_channels(*a, *b)
    }

    fn slice(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        self.tape.slice_channels(*x, start, len)
    }
}

/// Evaluates ops immediately without recording.
pub struct Eager<'a, T: Real> {
    pub params: &'a Params<T>,
}

impl<'a, T: Real> Eager<'a, T> {
    pub fn new(params: &'a Params<T>) -> Self {
        Eager { params }
    }
}

impl<T: Real> Exec<T> for Eager<'_, T> {
    type Node = NdArray<T>;

    fn input(&mut self, value: NdArray<T>) -> NdArray<T> {
        value
    }

    fn value<'a>(&'a self, node: &'a NdArray<T>) -> &'a NdArray<T> {
        node
    }

    fn conv3x3(&mut self, x: &NdArray<T>, layer: &str) -> Result<NdArray<T>> {
        let k = self.params.require(&weight_name(layer))?;
        let b = self.params.require(&bias_name(layer))?;
        kernels::conv3x3_forward(x, k, b)
    }

    fn conv1x1(&mut self, x: &NdArray<T>, layer: &str) -> Result<NdArray<T>> {
        let k = self.params.require(&weight_name(layer))?;
        let b = self.params.require(&bias_name(layer))?;
        kernels::conv1x1_forward(x, k, b)
    }

    fn relu(&mut self, mut x: NdArray<T>) -> NdArray<T> {
        x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        x
    }

    fn sigmoid(&mut self, mut x: NdArray<T>) -> NdArray<T> {
        x.data_mut().iter_mut().for_each(|v| *v = kernels::sigmoid(*v));
        x
    }

    fn max_pool2(&mut self, x: &NdArray<T>) -> Result<NdArray<T>> {
        Ok(kernels::max_pool2_forward(x)?.0)
    }

    fn upsample2(&mut self, x: &NdArray<T>) -> Result<NdArray<T>> {
        kernels::upsample2_forward(x)
    }

    fn concat(&mut self, a: &NdArray<T>, b: &NdArray<T>) -> Result<NdArray<T>> {
        NdArray::concat_channels(&[a, b])
    }

    fn slice(&mut self, x: &NdArray<T>, start: usize, len: usize) -> Result<NdArray<T>> {
        x.channels(start, len)
    }
}
