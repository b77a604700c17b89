use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Result};
use crate::nn::init;
use crate::rng::derive;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BufferId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub value: Tensor,
}

/// Named trainable tensors plus non-trainable state buffers of one network.
///
/// Every parameter draws its initial values from its own stream
/// `derive(seed, index)`, so adding a layer never perturbs earlier layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    seed: u64,
    params: Vec<Entry>,
    buffers: Vec<Entry>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore { seed, params: Vec::new(), buffers: Vec::new() }
    }

    /// Seed for the next tensor added to the store.
    pub fn next_seed(&self) -> u64 {
        derive(self.seed, (self.params.len() + self.buffers.len()) as u64)
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Entry { name: name.into(), value });
        ParamId(self.params.len() - 1)
    }

    /// Conv weight `C_out×C_in×k×k` with Xavier-uniform values.
    pub fn conv_weight(&mut self, name: impl Into<String>, cout: usize, cin: usize, k: usize) -> ParamId {
        let t = init::xavier_uniform(&[cout, cin, k, k], self.next_seed());
        self.add(name, t)
    }

    /// Linear weight `out×in` with uniform values of variance 1e-4.
    pub fn linear_weight(&mut self, name: impl Into<String>, out: usize, inp: usize) -> ParamId {
        let t = init::uniform_linear(&[out, inp], self.next_seed());
        self.add(name, t)
    }

    pub fn bias(&mut self, name: impl Into<String>, n: usize) -> ParamId {
        self.add(name, init::zeros_bias(n))
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> BufferId {
        self.buffers.push(Entry { name: name.into(), value });
        BufferId(self.buffers.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].value
    }

    pub fn params(&self) -> &[Entry] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Entry] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Entry] {
        &self.buffers
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|e| e.value.len()).sum()
    }

    /// Replaces all values from `entries` after checking every name and shape.
    pub fn load_entries(&mut self, params: &[Entry], buffers: &[Entry]) -> Result<()> {
        check_compatible(&self.params, params)?;
        check_compatible(&self.buffers, buffers)?;
        for (dst, src) in self.params.iter_mut().zip(params) {
            dst.value = src.value.clone();
        }
        for (dst, src) in self.buffers.iter_mut().zip(buffers) {
            dst.value = src.value.clone();
        }
        Ok(())
    }

    /// Hash of every parameter and buffer bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for e in self.params.iter().chain(&self.buffers) {
            e.name.hash(&mut h);
            e.value.shape().hash(&mut h);
            for v in e.value.data() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Records every parameter as a leaf on `g`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound { vars: self.params.iter().map(|e| g.leaf(e.value.clone(), trainable)).collect() }
    }
}

fn check_compatible(ours: &[Entry], theirs: &[Entry]) -> Result<()> {
    if ours.len() != theirs.len() {
        return Err(shape_err!("expected {} tensors, found {}", ours.len(), theirs.len()));
    }
    for (a, b) in ours.iter().zip(theirs) {
        if a.name != b.name || a.value.shape() != b.value.shape() {
            return Err(shape_err!(
                "tensor mismatch: expected {} {:?}, found {} {:?}",
                a.name,
                a.value.shape(),
                b.name,
                b.value.shape()
            ));
        }
    }
    Ok(())
}

/// Graph handles for the parameters of one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps existing leaves, in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the loss never reached get zeros.
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|&v| g.grad(v).unwrap_or_else(|| Tensor::zeros(g.shape(v))))
            .collect()
    }
}
