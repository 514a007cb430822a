use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        AdamState {
            first_moment: Gradients::zeros_like(model),
            second_moment: Gradients::zeros_like(model),
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }

    /// One bias-corrected Adam update of `model` in place.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != model.layers().len()
            || self.first_moment.layers.len() != model.layers().len()
        {
            return Err(Error::DimensionMismatch {
                expected: model.layers().len(),
                got: grads.layers.len(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);

        for (((layer, g), m1), m2) in model
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
        {
            let update = |theta: &mut [f64], g: &[f64], m1: &mut [f64], m2: &mut [f64]| {
                for i in 0..theta.len() {
                    m1[i] = b1 * m1[i] + (1.0 - b1) * g[i];
                    m2[i] = b2 * m2[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = m1[i] / correction1;
                    let v_hat = m2[i] / correction2;
                    theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            };
            update(&mut layer.weights, &g.weights, &mut m1.weights, &mut m2.weights);
            update(&mut layer.bias, &g.bias, &mut m1.bias, &mut m2.bias);
        }
        Ok(())
    }
}

pub fn adam_step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.step(model, grads, lr)
}
