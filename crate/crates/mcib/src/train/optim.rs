//! Gradient-descent optimizers over a parameter store.

use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    /// Adaptive moment estimation with bias correction.
    Adam,
}

pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Optimizer {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update; `grads` must align with the store's parameter order.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::usage(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        self.t += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (param, grad) in store.tensors_mut().iter_mut().zip(grads) {
                    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bias1 = 1.0 - self.beta1.powi(self.t as i32);
                let bias2 = 1.0 - self.beta2.powi(self.t as i32);
                for ((param, grad), (m, v)) in store
                    .tensors_mut()
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..grad.len() {
                        let g = grad.data()[i];
                        let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * g;
                        let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * g * g;
                        m.data_mut()[i] = mi;
                        v.data_mut()[i] = vi;
                        let m_hat = mi / bias1;
                        let v_hat = vi / bias2;
                        param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
