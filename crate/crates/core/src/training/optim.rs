//! Charbonnier objective, Adam and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::ModelWeights;
use crate::numerics::{Real, Tensor};

/// Mean of `sqrt((pred - gt)² + eps²)`.
pub fn charbonnier_loss<T: Real>(pred: &Tensor<T>, gt: &Tensor<T>, eps: f64) -> Result<f64> {
    ensure!(pred.shape() == gt.shape(), Dimension, "loss shapes {:?} and {:?} differ", pred.shape(), gt.shape());
    ensure!(eps > 0.0, Argument, "Charbonnier eps must be positive");
    ensure!(!pred.is_empty(), Dimension, "loss over an empty tensor");
    let e2 = eps * eps;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| {
            let d = p.as_f64() - g.as_f64();
            (d * d + e2).sqrt()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// `eta_min + (lr0 - eta_min)·(1 + cos(π·iter/total))/2`.
pub fn cosine_lr(iter: usize, total: usize, lr0: f64, eta_min: f64) -> Result<f64> {
    ensure!(iter <= total, Argument, "iteration {} beyond schedule length {}", iter, total);
    if total == 0 {
        return Ok(lr0);
    }
    let phase = std::f64::consts::PI * iter as f64 / total as f64;
    Ok(eta_min + (lr0 - eta_min) * (1.0 + phase.cos()) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments, one buffer per weight tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Real = f32> {
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(weights: &ModelWeights<T>) -> Self {
        let zeros: Vec<Vec<T>> = weights.tensors().map(|t| vec![T::zero(); t.len()]).collect();
        Self { first: zeros.clone(), second: zeros, step: 0 }
    }
}

/// Bias-corrected Adam update of one buffer at step `step` (1-based):
/// `m ← β₁m + (1-β₁)g`, `v ← β₂v + (1-β₂)g²`, `θ ← θ - lr·m̂/(√v̂ + ε)`.
pub fn adam_update<T: Real>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], step: u64, lr: f64, hp: AdamParams) {
    let c1 = 1.0 - hp.beta1.powf(step as f64);
    let c2 = 1.0 - hp.beta2.powf(step as f64);
    let (b1, b2) = (T::lit(hp.beta1), T::lit(hp.beta2));
    let (nb1, nb2) = (T::lit(1.0 - hp.beta1), T::lit(1.0 - hp.beta2));
    let (inv_c1, inv_c2) = (T::lit(1.0 / c1), T::lit(1.0 / c2));
    let (lr, eps) = (T::lit(lr), T::lit(hp.eps));
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + nb1 * g;
        *v = b2 * *v + nb2 * g * g;
        let m_hat = *m * inv_c1;
        let v_hat = *v * inv_c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One Adam step over every weight tensor. Non-finite gradients abort the
/// step before anything is modified.
pub fn adam_step<T: Real>(
    weights: &mut ModelWeights<T>,
    state: &mut OptimizerState<T>,
    grads: &[Vec<T>],
    lr: f64,
    hp: AdamParams,
) -> Result<()> {
    ensure!(
        grads.len() == weights.len() && state.first.len() == weights.len(),
        Dimension,
        "{} gradient buffers for {} weight tensors",
        grads.len(),
        weights.len()
    );
    for ((t, g), m) in weights.tensors().zip(grads).zip(&state.first) {
        ensure!(t.len() == g.len() && t.len() == m.len(), Dimension, "gradient buffer length mismatch");
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Training("non-finite gradient".into()));
    }
    state.step += 1;
    let step = state.step;
    for (((t, g), m), v) in weights.tensors_mut().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        adam_update(t.data_mut(), g, m, v, step, lr, hp);
    }
    Ok(())
}
