//! Learnable class weights driven toward the gradient-balance solution.
//!
//! For each foreground class the balance condition is
//! `w_i * G_ii = -sum_{k != i} w_k * G_ik`, with the background row replaced
//! by the scale constraint `sum_i w_i = n + 1`. The weights are parameterized
//! as `w_i = (n+1) * softmax(a)_i`, which keeps them positive and on the right
//! scale by construction, and the logits `a` chase the Jacobi target through
//! a quadratic alignment loss in log space.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::matrix::SquareMatrix;

/// Diagonal magnitude below which a class is treated as having no gradient
/// evidence yet; its Jacobi target holds the current weight.
pub const DIAG_FLOOR: f64 = 1e-8;

/// Lower clamp on Jacobi targets (and the weight invariant floor).
pub const W_MIN: f64 = 1e-3;

/// Upper clamp on Jacobi targets, as a fraction of `n + 1`.
pub const W_MAX_FRACTION: f64 = 0.999;

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_LR_ALIGN: f64 = 0.01;

/// `w_i = (n+1) * exp(a_i) / sum_j exp(a_j)`, max-subtracted.
pub fn weights_from_logits(a: &[f64]) -> Vec<f64> {
    let scale = a.len() as f64;
    let max = a.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mut w: Vec<f64> = a.iter().map(|x| fmath::exp(x - max)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v *= scale / sum);
    w
}

/// `w^l_i = w_i^beta`, the smoothed weights applied to the labeled loss.
pub fn smooth_labeled_weights(w: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) || beta == 0.0 {
        return Err(Error::InvalidInput(alloc::format!(
            "beta must be in (0, 1], got {beta}"
        )));
    }
    if w.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("weights must be positive".into()));
    }
    Ok(w.iter().map(|v| fmath::powf(*v, beta)).collect())
}

/// Jacobi sweep target for the current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiTarget {
    pub w_hat: Vec<f64>,
}

/// One Jacobi sweep over the EMA gradient matrix.
///
/// Foreground rows with a usable diagonal get
/// `w_hat_i = -sum_{k != i} w_k * G_ik / G_ii`; rows without gradient
/// evidence hold the current weight. The background entry closes the scale
/// constraint, and every component is clamped to `[W_MIN, (n+1)*W_MAX_FRACTION]`.
pub fn jacobi_target(gt: &SquareMatrix, w: &[f64]) -> Result<JacobiTarget> {
    let dim = gt.dim();
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    if !gt.is_finite() {
        return Err(Error::NonFinite("EMA gradient matrix"));
    }
    let mut w_hat = vec![0.0; dim];
    let mut fg_sum = 0.0;
    for i in 0..dim - 1 {
        let diag = gt.get(i, i);
        w_hat[i] = if fmath::abs(diag) > DIAG_FLOOR {
            let acc: f64 = w
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(k, wk)| wk * gt.get(i, k))
                .sum();
            -acc / diag
        } else {
            w[i]
        };
        fg_sum += w_hat[i];
    }
    w_hat[dim - 1] = dim as f64 - fg_sum;

    let hi = dim as f64 * W_MAX_FRACTION;
    for v in w_hat.iter_mut() {
        *v = v.clamp(W_MIN, hi);
    }
    Ok(JacobiTarget { w_hat })
}

/// Per-foreground-row balance residual `|w_i G_ii + sum_{k != i} w_k G_ik|`.
/// Rows with diagonal below [`DIAG_FLOOR`] report 0 (no evidence to balance).
pub fn balance_residuals(gt: &SquareMatrix, w: &[f64]) -> Result<Vec<f64>> {
    let dim = gt.dim();
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    let mut out = vec![0.0; dim.saturating_sub(1)];
    for (i, r) in out.iter_mut().enumerate() {
        if fmath::abs(gt.get(i, i)) <= DIAG_FLOOR {
            continue;
        }
        let acc: f64 = w.iter().enumerate().map(|(k, wk)| wk * gt.get(i, k)).sum();
        *r = fmath::abs(acc);
    }
    Ok(out)
}

/// Direct elimination solve of the same system the iterative path targets:
/// foreground rows `sum_k w_k G_ik = 0`, background row `sum_k w_k = n + 1`.
pub fn solve_direct(gt: &SquareMatrix) -> Result<Vec<f64>> {
    let dim = gt.dim();
    if !gt.is_finite() {
        return Err(Error::NonFinite("EMA gradient matrix"));
    }
    let mut system = SquareMatrix::zeros(dim);
    let mut b = vec![0.0; dim];
    for i in 0..dim - 1 {
        for k in 0..dim {
            system.set(i, k, gt.get(i, k));
        }
    }
    for k in 0..dim {
        system.set(dim - 1, k, 1.0);
    }
    b[dim - 1] = dim as f64;
    system.solve(&b)
}

/// Learnable class-weight state: logits `a`, derived weights `w` and the
/// smoothed labeled-loss weights `w^l`.
#[derive(Debug, Clone)]
pub struct ClassWeights {
    a: Vec<f64>,
    w: Vec<f64>,
    w_labeled: Vec<f64>,
    beta: f64,
    lr_align: f64,
}

impl ClassWeights {
    /// Logits start at zero, so all weights start at 1.
    pub fn new(dim: usize, beta: f64, lr_align: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("need at least one class".into()));
        }
        if !(0.0..=1.0).contains(&beta) || beta == 0.0 {
            return Err(Error::InvalidInput(alloc::format!(
                "beta must be in (0, 1], got {beta}"
            )));
        }
        if lr_align <= 0.0 || !lr_align.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "lr_align must be positive, got {lr_align}"
            )));
        }
        let a = vec![0.0; dim];
        let w = weights_from_logits(&a);
        let w_labeled = smooth_labeled_weights(&w, beta)?;
        Ok(Self {
            a,
            w,
            w_labeled,
            beta,
            lr_align,
        })
    }

    pub fn with_defaults(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_BETA, DEFAULT_LR_ALIGN)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.a
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Weights for the labeled classification loss (`w^beta`).
    pub fn labeled_weights(&self) -> &[f64] {
        &self.w_labeled
    }

    /// Foreground weights only (background excluded), as used by thresholding.
    pub fn foreground_weights(&self) -> &[f64] {
        &self.w[..self.w.len() - 1]
    }

    /// One gradient-descent step on the alignment loss
    /// `L = (1/(n+1)) * sum_i (log(w_hat_i) - a_i)^2`; returns the loss value
    /// before the step. Weights are recomputed from the updated logits.
    pub fn align_step(&mut self, target: &JacobiTarget) -> Result<f64> {
        let dim = self.a.len();
        if target.w_hat.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: target.w_hat.len(),
            });
        }
        if target.w_hat.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::Internal("nonpositive Jacobi target after clamping"));
        }
        let inv = 1.0 / dim as f64;
        let mut loss = 0.0;
        for (ai, wh) in self.a.iter_mut().zip(&target.w_hat) {
            let diff = *ai - fmath::ln(*wh);
            loss += diff * diff;
            *ai -= self.lr_align * 2.0 * inv * diff;
        }
        loss *= inv;
        self.w = weights_from_logits(&self.a);
        self.w_labeled = smooth_labeled_weights(&self.w, self.beta)?;
        Ok(loss)
    }
}
