//! Adam optimizer with bias-corrected first and second moments.
//!
//! Update per element, with t incremented once per `adam_step` call:
//!   m <- b1*m + (1-b1)*g         mhat = m / (1 - b1^t)
//!   v <- b2*v + (1-b2)*g^2       vhat = v / (1 - b2^t)
//!   theta <- theta - alpha * mhat / (sqrt(vhat) + eps)
//! The epsilon sits outside the square root.

use std::collections::HashMap;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensor. Names key the optimizer moments and checkpoints.
#[derive(Clone)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Parameter { name: name.into(), tensor }
    }
}

/// Optimizer state: hyperparameters, step count, and per-parameter moments.
pub struct AdamState<T: Scalar> {
    pub alpha: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    moments: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(alpha: T, beta1: T, beta2: T, eps: T) -> Self {
        AdamState {
            alpha,
            beta1,
            beta2,
            eps,
            t: 0,
            moments: HashMap::new(),
        }
    }

    /// alpha 1e-3, beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn with_defaults() -> Self {
        AdamState::new(
            T::from_f64(1e-3),
            T::from_f64(0.9),
            T::from_f64(0.999),
            T::from_f64(1e-8),
        )
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Checkpoint restore: overwrite step count and moment buffers.
    pub fn restore(&mut self, t: u64, moments: HashMap<String, (Vec<T>, Vec<T>)>) {
        self.t = t;
        self.moments = moments;
    }

    pub fn moments(&self) -> &HashMap<String, (Vec<T>, Vec<T>)> {
        &self.moments
    }
}

/// Apply one Adam update to every parameter, in slice order. Errs if any
/// parameter is missing its gradient (backward not run, or already cleared).
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, params: &[Parameter<T>]) -> Result<()> {
    for p in params {
        if p.tensor.grad_ref().is_none() {
            return Err(Error::MissingGrad { name: p.name.clone() });
        }
    }
    state.t += 1;
    let t = state.t;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = T::one() - b1.powi(t as i32);
    let bc2 = T::one() - b2.powi(t as i32);
    let one = T::one();
    for p in params {
        let grad_ref = p.tensor.grad_ref();
        let g = grad_ref.as_ref().expect("checked above");
        let numel = p.tensor.numel();
        let (m, v) = state
            .moments
            .entry(p.name.clone())
            .or_insert_with(|| (vec![T::zero(); numel], vec![T::zero(); numel]));
        debug_assert_eq!(m.len(), g.len());
        let mut data = p.tensor.data_mut();
        for i in 0..numel {
            let gi = g[i];
            m[i] = b1 * m[i] + (one - b1) * gi;
            v[i] = b2 * v[i] + (one - b2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            data[i] = data[i] - state.alpha * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// Drop accumulated gradients on every parameter.
pub fn clear_grads<T: Scalar>(params: &[Parameter<T>]) {
    for p in params {
        p.tensor.clear_grad();
    }
}
