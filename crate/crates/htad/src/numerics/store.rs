//! Named trainable parameters with gradient slots and Adam state.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Stable handle to a parameter in a [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
}

impl Parameter {
    fn new(name: String, value: Tensor) -> Self {
        let len = value.len();
        Parameter {
            name,
            value,
            grad: vec![0.0; len],
            adam_m: vec![0.0; len],
            adam_v: vec![0.0; len],
        }
    }
}

/// Adam hyperparameters. Defaults are the usual (0.001, 0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// All trainable tensors of a model, each with a gradient slot and Adam moments.
///
/// Insertion order is the canonical parameter order; it drives checkpoint layout
/// and makes every whole-store operation deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidInput(format!(
                "parameter `{name}` already exists"
            )));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(name.to_string(), value));
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    pub fn adam_state(&self, id: ParamId) -> (&[f64], &[f64]) {
        let p = &self.params[id.0];
        (&p.adam_m, &p.adam_v)
    }

    pub(crate) fn adam_state_mut(&mut self, id: ParamId) -> (&mut Vec<f64>, &mut Vec<f64>) {
        let p = &mut self.params[id.0];
        (&mut p.adam_m, &mut p.adam_v)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Global L2 norm of all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Scale all gradients so their global norm does not exceed `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = max_norm / norm;
            for p in &mut self.params {
                for g in &mut p.grad {
                    *g *= scale;
                }
            }
        }
        norm
    }

    /// One bias-corrected Adam update over every parameter; clears gradients.
    pub fn adam_step(&mut self, hp: &AdamParams) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hp.beta1.powi(t);
        let bc2 = 1.0 - hp.beta2.powi(t);
        for p in &mut self.params {
            for i in 0..p.grad.len() {
                let g = p.grad[i];
                if !g.is_finite() {
                    return Err(Error::NonFinite(format!("gradient of `{}`", p.name)));
                }
                p.adam_m[i] = hp.beta1 * p.adam_m[i] + (1.0 - hp.beta1) * g;
                p.adam_v[i] = hp.beta2 * p.adam_v[i] + (1.0 - hp.beta2) * g * g;
                let m_hat = p.adam_m[i] / bc1;
                let v_hat = p.adam_v[i] / bc2;
                p.value.data_mut()[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            }
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = ParameterStore::new();
        let id = store
            .insert("w", Tensor::vector(vec![1.0, -2.0, 3.0]))
            .unwrap();
        store.adam_step(&AdamParams::default()).unwrap();
        assert_eq!(store.value(id).data(), &[1.0, -2.0, 3.0]);
        assert_eq!(store.step(), 1);
    }

    #[test]
    fn first_adam_step_matches_hand_computation() {
        // g = 1 at t = 1 with defaults: bias correction cancels, delta = -lr.
        let mut store = ParameterStore::new();
        let id = store.insert("x", Tensor::vector(vec![0.5])).unwrap();
        store.grad_mut(id)[0] = 1.0;
        store.adam_step(&AdamParams::default()).unwrap();
        assert_abs_diff_eq!(store.value(id).data()[0], 0.5 - 0.001, epsilon = 1e-6);
        assert_eq!(store.grad(id)[0], 0.0);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // f(x) = x^2, gradient 2x, from x = 1.
        let mut store = ParameterStore::new();
        let id = store.insert("x", Tensor::vector(vec![1.0])).unwrap();
        let hp = AdamParams {
            lr: 0.05,
            ..AdamParams::default()
        };
        for _ in 0..500 {
            let x = store.value(id).data()[0];
            store.grad_mut(id)[0] = 2.0 * x;
            store.adam_step(&hp).unwrap();
        }
        assert!(store.value(id).data()[0].abs() < 0.1);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut store = ParameterStore::new();
        let id = store.insert("x", Tensor::vector(vec![0.0])).unwrap();
        store.grad_mut(id)[0] = f64::NAN;
        assert!(store.adam_step(&AdamParams::default()).is_err());
    }

    #[test]
    fn clip_rescales_large_gradients() {
        let mut store = ParameterStore::new();
        let id = store.insert("x", Tensor::vector(vec![0.0, 0.0])).unwrap();
        store.grad_mut(id).copy_from_slice(&[30.0, 40.0]);
        let norm = store.clip_global_norm(5.0);
        assert_abs_diff_eq!(norm, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(store.grad(id)[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(store.grad(id)[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::vector(vec![0.0])).unwrap();
        assert!(store.insert("w", Tensor::vector(vec![0.0])).is_err());
    }
}
