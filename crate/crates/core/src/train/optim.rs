//! Adam with bias correction and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{tensor_specs, ModelConfig, ModelWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One Adam update of a flat parameter slice. `step` is 1-based.
/// Decay, when enabled, is applied to the weight directly rather than through the gradient.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    w: &mut [f32],
    g: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    step: u64,
    lr: f64,
    opt: &OptimizerConfig,
    decay: bool,
) -> Result<(), TrainError> {
    if g.len() != w.len() || m.len() != w.len() || v.len() != w.len() {
        return Err(TrainError::ShapeMismatch {
            expected: vec![w.len()],
            found: vec![g.len(), m.len(), v.len()],
        });
    }
    let c1 = 1.0 - opt.beta1.powi(step as i32);
    let c2 = 1.0 - opt.beta2.powi(step as i32);
    for i in 0..w.len() {
        let gi = g[i] as f64;
        let mi = opt.beta1 * m[i] as f64 + (1.0 - opt.beta1) * gi;
        let vi = opt.beta2 * v[i] as f64 + (1.0 - opt.beta2) * gi * gi;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let mut wi = w[i] as f64;
        let update = (mi / c1) / ((vi / c2).sqrt() + opt.epsilon);
        if decay {
            wi -= lr * opt.weight_decay * wi;
        }
        w[i] = (wi - lr * update) as f32;
    }
    Ok(())
}

/// Moment estimates for every weight tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: ModelWeights<f32>,
    v: ModelWeights<f32>,
    decays: Vec<bool>,
    step: u64,
}

impl AdamState {
    pub fn new(cfg: &ModelConfig) -> Self {
        AdamState {
            m: ModelWeights::zeros(cfg),
            v: ModelWeights::zeros(cfg),
            decays: tensor_specs(cfg).iter().map(|s| s.kind.decays()).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Applies one optimizer step to all tensors. Layer-norm and bias tensors are not decayed.
pub fn adam_step(
    weights: &mut ModelWeights<f32>,
    grads: &ModelWeights<f32>,
    state: &mut AdamState,
    lr: f64,
    opt: &OptimizerConfig,
) -> Result<(), TrainError> {
    let ws = weights.tensors_mut();
    let gs = grads.tensors();
    if ws.len() != gs.len() || ws.len() != state.decays.len() {
        return Err(TrainError::ShapeMismatch {
            expected: vec![state.decays.len()],
            found: vec![ws.len(), gs.len()],
        });
    }
    state.step += 1;
    let step = state.step;
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for ((((w, g), m), v), &decay) in ws.into_iter().zip(gs).zip(ms).zip(vs).zip(&state.decays) {
        adam_update(w, g, m, v, step, lr, opt, decay)?;
    }
    Ok(())
}
