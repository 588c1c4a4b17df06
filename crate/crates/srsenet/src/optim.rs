//! Charbonnier loss and the Adam optimizer.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Scalar, Tensor};

/// Smooth L1 surrogate `rho(z) = sqrt(z^2 + eps^2)`, reduced by mean.
#[derive(Clone, Copy, Debug)]
pub struct CharbonnierLoss {
    pub epsilon: f64,
}

impl Default for CharbonnierLoss {
    fn default() -> Self {
        CharbonnierLoss { epsilon: 1e-3 }
    }
}

impl CharbonnierLoss {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 {
            return Err(Error::invalid("charbonnier", "epsilon must be positive"));
        }
        Ok(CharbonnierLoss { epsilon })
    }

    pub fn eval<T: Scalar>(&self, pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
        ops::raw::charbonnier(pred, target, self.epsilon)
    }

    pub fn on_tape<T: Scalar>(&self, tape: &Tape<T>, pred: Var, target: &Tensor<T>) -> Result<Var> {
        ops::tape::charbonnier(tape, pred, target, self.epsilon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, delta: 1e-8 }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param_shapes: &[[usize; 4]], config: AdamConfig) -> Self {
        AdamState {
            m: param_shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
            v: param_shapes.iter().map(|&s| Tensor::zeros(s)).collect(),
            t: 0,
            config,
        }
    }

    /// One bias-corrected update. A non-finite gradient aborts the whole step
    /// before any parameter is touched.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
        names: &[String],
    ) -> Result<()> {
        assert_eq!(params.len(), grads.len());
        for (g, name) in grads.iter().zip(names) {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { name: name.clone() });
            }
        }
        self.t += 1;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.config.learning_rate);
        let delta = T::from_f64(self.config.delta);
        for ((param, grad), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..param.len() {
                let g = grad.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * g;
                let vi = b2 * v.data()[i] + (one - b2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                let p = param.data()[i];
                param.data_mut()[i] = p - lr * m_hat / (v_hat.sqrt() + delta);
            }
        }
        Ok(())
    }
}
