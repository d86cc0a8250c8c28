use std::collections::BTreeMap;

use crate::error::{NnError, Result};
use crate::graph::{Gradients, Graph, ParamId, Var};
use crate::rng::SplitMix64;
use crate::scalar::Float;
use crate::tensor::Tensor;

/// Trainable tensor with its gradient and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Float> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            value,
            step_count: 0,
        }
    }
}

/// Named parameters plus non-trainable buffers (batch-norm running stats).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    buffers: Vec<(String, Tensor<T>)>,
}

pub type BufferId = usize;

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            buffers: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.params.push(Parameter::new(name, value));
        self.params.len() - 1
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> BufferId {
        self.buffers.push((name.into(), value));
        self.buffers.len() - 1
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id]
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id].1
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor<T> {
        &mut self.buffers[id].1
    }

    pub fn bind(&self, graph: &mut Graph<T>, id: ParamId) -> Var {
        graph.param(id, &self.params[id].value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Add the gradients of all bound parameters into `Parameter::grad`.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (id, g) in grads.params() {
            self.params[id].grad.add_assign(g);
        }
    }

    /// Parameters then buffers, by name, converted to `f32`.
    pub fn named_tensors(&self) -> BTreeMap<String, Tensor<f32>> {
        let mut out = BTreeMap::new();
        for p in &self.params {
            out.insert(p.name.clone(), p.value.cast());
        }
        for (name, b) in &self.buffers {
            out.insert(name.clone(), b.cast());
        }
        out
    }

    /// Overwrite values from a name map; every parameter and buffer must be present
    /// with a matching shape.
    pub fn load_named(&mut self, tensors: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        let lookup = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let t = tensors
                .get(name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.shape() != shape {
                return Err(NnError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            Ok(t.cast())
        };
        for p in &mut self.params {
            p.value = lookup(&p.name, p.value.shape())?;
        }
        for (name, b) in &mut self.buffers {
            *b = lookup(name, b.shape())?;
        }
        Ok(())
    }
}

/// Uniform in `±sqrt(1/fan_in)`.
pub fn init_fan_in<T: Float>(rng: &mut SplitMix64, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.uniform(-bound, bound)))
}
