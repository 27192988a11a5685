//! Named parameter storage.
//!
//! Model modules hold [`ParamId`] handles into a [`ParamStore`] instead of
//! owning tensors, so one flat, ordered collection drives tape binding, the
//! optimizer, serialization, and finite-difference checks without any risk
//! of traversal-order mismatches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{math, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Replaces a parameter value; the shape must match.
    pub fn set(&mut self, id: ParamId, tensor: Tensor) -> Result<()> {
        if !self.tensors[id.0].same_shape(&tensor) {
            return Err(Error::config(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                self.tensors[id.0].shape(),
                tensor.shape()
            )));
        }
        self.tensors[id.0] = tensor;
        Ok(())
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn total_coords(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Registers every parameter on the tape as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> TapeParams {
        TapeParams {
            vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect(),
        }
    }

    /// Registers every parameter as a constant (inference paths).
    pub fn bind_const(&self, tape: &mut Tape) -> TapeParams {
        TapeParams {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.constant(t.clone()))
                .collect(),
        }
    }
}

/// Tape handles for every parameter in store order.
pub struct TapeParams {
    vars: Vec<Var>,
}

impl TapeParams {
    /// Wraps externally registered leaves (finite-difference checks).
    /// The order must match the store's parameter order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        TapeParams { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Weight + bias pair for an affine layer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl AffineParams {
    /// Gaussian fan-in initialization, zero bias.
    pub fn init(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        AffineParams {
            w: store.alloc(format!("{name}.w"), Tensor::randn(fan_in, fan_out, std, rng)),
            b: store.alloc(format!("{name}.b"), Tensor::zeros(1, fan_out)),
        }
    }

    /// All-zero layer (used for the log-variance head so sigma starts at 1).
    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        AffineParams {
            w: store.alloc(format!("{name}.w"), Tensor::zeros(fan_in, fan_out)),
            b: store.alloc(format!("{name}.b"), Tensor::zeros(1, fan_out)),
        }
    }

    pub fn apply(&self, tape: &mut Tape, tp: &TapeParams, x: Var) -> Result<Var> {
        tape.affine(x, tp.var(self.w), tp.var(self.b))
    }

    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let h = math::matmul(x, store.get(self.w))?;
        math::add_row(&h, store.get(self.b))
    }
}

/// Gain/shift pair applied after pre-affine layer normalization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub fn init(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNormParams {
            gamma: store.alloc(format!("{name}.gamma"), Tensor::filled(1, dim, 1.0)),
            beta: store.alloc(format!("{name}.beta"), Tensor::zeros(1, dim)),
        }
    }

    pub fn apply(&self, tape: &mut Tape, tp: &TapeParams, x: Var) -> Result<Var> {
        let normed = tape.layer_norm(x, math::LAYER_NORM_EPS);
        let scaled = tape.mul_row(normed, tp.var(self.gamma))?;
        tape.add_row(scaled, tp.var(self.beta))
    }
}
