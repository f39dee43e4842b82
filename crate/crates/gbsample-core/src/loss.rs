//! Analytic loss and logit-gradient for the classification head.
//!
//! Both losses operate on a single shared logit vector of length `n + 1`
//! (foreground classes `0..n`, background at index `n`). Gradients are the
//! exact partial derivatives of the loss with respect to each logit, so the
//! components always sum to zero (shift invariance of softmax).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    SoftmaxFocal,
}

/// Classification loss selector. `gamma_focal = 0` under [`LossKind::SoftmaxFocal`]
/// reproduces cross-entropy exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub gamma_focal: f64,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        Self {
            kind: LossKind::SoftmaxCrossEntropy,
            gamma_focal: 0.0,
        }
    }

    /// Softmax focal loss `-(1 - p_c)^gamma * log p_c`.
    pub fn focal(gamma: f64) -> Self {
        Self {
            kind: LossKind::SoftmaxFocal,
            gamma_focal: gamma,
        }
    }
}

/// Numerically stable softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut out: Vec<f64> = logits.iter().map(|x| fmath::exp(x - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Loss value and its exact gradient with respect to the logits.
///
/// `label` is a 0-based class index into `logits` (background is the last
/// index by convention, but this function does not care).
pub fn loss_and_grad(logits: &[f64], label: usize, spec: &LossSpec) -> Result<(f64, Vec<f64>)> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            dim: logits.len(),
        });
    }
    if spec.gamma_focal < 0.0 || !spec.gamma_focal.is_finite() {
        return Err(Error::InvalidInput(format!(
            "gamma_focal must be a nonnegative real, got {}",
            spec.gamma_focal
        )));
    }

    let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let log_sum = fmath::ln(logits.iter().map(|x| fmath::exp(x - max)).sum());
    let p = softmax(logits);
    // log p_c via log-sum-exp, avoids ln(softmax) underflow
    let log_p = logits[label] - max - log_sum;
    let q = p[label];

    let gamma = match spec.kind {
        LossKind::SoftmaxCrossEntropy => 0.0,
        LossKind::SoftmaxFocal => spec.gamma_focal,
    };

    if gamma == 0.0 {
        let loss = -log_p;
        let mut grad = p;
        grad[label] -= 1.0;
        return Ok((loss, grad));
    }

    // 1 - q as the mass on the other classes, exact when q -> 1
    let omq: f64 = p
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label)
        .map(|(_, v)| v)
        .sum();
    let loss = -fmath::powf(omq, gamma) * log_p;
    // dL/dq for L = -(1-q)^g * ln q
    let dl_dq = if omq == 0.0 {
        0.0
    } else {
        gamma * fmath::powf(omq, gamma - 1.0) * log_p - fmath::powf(omq, gamma) / q
    };
    let mut grad = vec![0.0; logits.len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let indicator = if i == label { 1.0 } else { 0.0 };
        // dq/dx_i = q * (delta_ic - p_i)
        *g = dl_dq * q * (indicator - p[i]);
    }
    Ok((loss, grad))
}
