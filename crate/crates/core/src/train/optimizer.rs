use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.98;
pub const ADAM_EPS: f64 = 1e-9;

/// Hyperparameters and step counter; moments live alongside in [`OptimizerState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Scalar = f32> {
    pub hyper: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &[Tensor<T>], hyper: AdamConfig) -> Self {
        OptimizerState {
            hyper,
            step: 0,
            m: params.iter().map(|p| vec![T::ZERO; p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::ZERO; p.numel()]).collect(),
        }
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(params: &mut [Tensor<T>], max_norm: f64) -> Result<f64> {
    let mut sq = 0.0f64;
    for p in params.iter() {
        let g = p
            .grad()
            .ok_or_else(|| Error::Contract("clipping needs every gradient".into()))?;
        sq += g.iter().map(|&x| x.to_f64() * x.to_f64()).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm.is_finite() {
        let c = T::from_f64(max_norm / norm);
        for p in params.iter_mut() {
            let mut g = p.take_grad().unwrap();
            g.iter_mut().for_each(|x| *x *= c);
            p.set_grad(g)?;
        }
    }
    Ok(norm)
}

/// Bias-corrected adaptive-moment update from each tensor's gradient slot.
/// Gradients are consumed; a tensor without one is a contract error and
/// leaves every parameter untouched.
pub fn adam_step<T: Scalar>(params: &mut [Tensor<T>], state: &mut OptimizerState<T>) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
        return Err(Error::Contract(format!("parameter {i} has no gradient")));
    }
    state.step += 1;
    let h = &state.hyper;
    let t = state.step as i32;
    let (b1, b2) = (T::from_f64(h.beta1), T::from_f64(h.beta2));
    let (c1, c2) = (T::ONE - b1, T::ONE - b2);
    let corr1 = T::from_f64(1.0 - h.beta1.powi(t));
    let corr2 = T::from_f64(1.0 - h.beta2.powi(t));
    let lr = T::from_f64(h.learning_rate);
    let eps = T::from_f64(h.eps);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let g = p.take_grad().unwrap();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + c1 * gi;
            *vi = b2 * *vi + c2 * gi * gi;
            let mhat = *mi / corr1;
            let vhat = *vi / corr2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
