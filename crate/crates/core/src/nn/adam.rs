//! Adam optimizer with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use super::params::{Binding, ParamSet};
use super::tape::Gradients;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators, parallel to the ParamSet order.
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        let moments = params
            .iter()
            .map(|(_, p)| (vec![0.0; p.tensor.len()], vec![0.0; p.tensor.len()]))
            .collect();
        AdamState { cfg, step: 0, moments }
    }

    /// One update over every parameter. Parameters whose gradient is absent
    /// from this pass (no path to the loss) are left untouched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, binding: &Binding) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let Some(g) = grads.wrt(binding.var(id)) else { continue };
            let (m, v) = &mut self.moments[id.0];
            let p = &mut params.get_mut(id).tensor.data;
            for i in 0..p.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.cfg.lr * mhat / (vhat.sqrt() + self.cfg.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::{Tape, Tensor};

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = ParamSet::new();
        let id = params.register("w", Tensor::new(vec![2], vec![1.5, -0.5]));
        let mut adam = AdamState::new(AdamConfig::default(), &params);

        let mut tape = Tape::new();
        let binding = Binding::bind_all(&params, &mut tape);
        // loss = 0 * sum(w): gradient is exactly zero for every element
        let s = tape.sum(binding.var(id));
        let loss = tape.scale(s, 0.0);
        let grads = tape.backward(loss).unwrap();
        adam.step(&mut params, &grads, &binding);
        assert_eq!(params.get(id).tensor.data, vec![1.5, -0.5]);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut params = ParamSet::new();
        let id = params.register("x", Tensor::scalar(3.0));
        let mut adam = AdamState::new(AdamConfig { lr: 0.1, ..Default::default() }, &params);
        for _ in 0..500 {
            let mut tape = Tape::new();
            let binding = Binding::bind_all(&params, &mut tape);
            let x = binding.var(id);
            let loss = tape.mul(x, x);
            let grads = tape.backward(loss).unwrap();
            adam.step(&mut params, &grads, &binding);
        }
        assert!(params.get(id).tensor.data[0].abs() < 1e-2);
    }
}
