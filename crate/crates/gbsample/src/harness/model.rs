//! Linear classification head and its EMA teacher copy, the desk-scale
//! stand-in for the detection head.

use anyhow::{bail, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `logits = W x + b` with momentum-SGD state.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>, // row-major out_dim x in_dim
    pub bias: Vec<f64>,
    vel_weight: Vec<f64>,
    vel_bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(out_dim: usize, in_dim: usize, init_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let weight = (0..out_dim * in_dim)
            .map(|_| init_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            out_dim,
            in_dim,
            weight,
            bias: vec![0.0; out_dim],
            vel_weight: vec![0.0; out_dim * in_dim],
            vel_bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            *out_v += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Momentum-SGD update from accumulated parameter gradients.
    /// `scale` multiplies the gradients (batch normalization factor).
    pub fn sgd_step(
        &mut self,
        grad_weight: &[f64],
        grad_bias: &[f64],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        scale: f64,
    ) -> Result<()> {
        if grad_weight.len() != self.weight.len() || grad_bias.len() != self.bias.len() {
            bail!("gradient shape mismatch");
        }
        for (i, (w, g)) in self.weight.iter_mut().zip(grad_weight).enumerate() {
            let g = g * scale + weight_decay * *w;
            self.vel_weight[i] = momentum * self.vel_weight[i] + g;
            *w -= lr * self.vel_weight[i];
        }
        for (i, (b, g)) in self.bias.iter_mut().zip(grad_bias).enumerate() {
            let g = g * scale; // no decay on bias
            self.vel_bias[i] = momentum * self.vel_bias[i] + g;
            *b -= lr * self.vel_bias[i];
        }
        Ok(())
    }
}

/// EMA copy of the student's parameters, used to produce pseudo labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherState {
    pub model: LinearClassifier,
    pub eta_p: f64,
}

impl TeacherState {
    pub fn from_student(student: &LinearClassifier, eta_p: f64) -> Self {
        Self {
            model: student.clone(),
            eta_p,
        }
    }

    /// Hard copy of the student's parameters (used after burn-in, so the
    /// first pseudo labels come from a trained teacher).
    pub fn copy_from(&mut self, student: &LinearClassifier) {
        self.model.weight.copy_from_slice(&student.weight);
        self.model.bias.copy_from_slice(&student.bias);
    }

    /// `teacher = eta_p * teacher + (1 - eta_p) * student`, elementwise.
    pub fn ema_update(&mut self, student: &LinearClassifier) -> Result<()> {
        if student.weight.len() != self.model.weight.len() {
            bail!("teacher/student shape mismatch");
        }
        let eta = self.eta_p;
        for (t, s) in self.model.weight.iter_mut().zip(&student.weight) {
            *t = eta * *t + (1.0 - eta) * s;
        }
        for (t, s) in self.model.bias.iter_mut().zip(&student.bias) {
            *t = eta * *t + (1.0 - eta) * s;
        }
        Ok(())
    }
}
