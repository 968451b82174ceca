//! Adam with decoupled weight decay.

use super::param::ParamStore;
use super::NumericsError;

/// Optimizer hyperparameters. Betas and epsilon default to the standard
/// 0.9 / 0.999 / 1e-8 and rarely need touching.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// One optimizer step over every parameter in the store.
///
/// Decay is decoupled: values are multiplied by `1 - lr * weight_decay`
/// before the moment update, so the regularizer never leaks into the moment
/// estimates. Gradients are zeroed afterwards and each parameter's step
/// count advances, which keeps bias correction exact.
///
/// A non-finite gradient entry aborts with the parameter's name before any
/// state is touched.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<(), NumericsError> {
    for (name, p) in store.iter() {
        if !p.grad.is_finite() {
            return Err(NumericsError::NonFiniteGrad(name.to_string()));
        }
    }
    for (_, p) in store.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        let values = p.value.values_mut();
        let grads = p.grad.values_mut();
        let ms = p.adam_m.values_mut();
        let vs = p.adam_v.values_mut();
        for i in 0..values.len() {
            values[i] *= decay;
            let g = grads[i];
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            grads[i] = 0.0;
        }
    }
    Ok(())
}
