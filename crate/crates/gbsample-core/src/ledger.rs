//! Class-wise gradient matrix accumulation.
//!
//! Row `i`, column `k` of the raw matrix holds the sum, over the batch's
//! proposals labeled with class `k`, of the loss derivative with respect to
//! logit `i`. Diagonal entries are the positive gradients of a class (its own
//! samples), off-diagonal row entries the negative gradients from other
//! classes' samples. Columns of classes absent from a batch stay exactly zero.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{loss_and_grad, LossSpec};
use crate::matrix::SquareMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalSource {
    Labeled,
    Unlabeled,
}

/// A batch of proposals: one logit row, label and source flag per proposal.
/// Labels are 0-based; index `dim - 1` is the background class.
#[derive(Debug, Clone, Default)]
pub struct ProposalBatch {
    dim: usize,
    logits: Vec<f64>,
    labels: Vec<usize>,
    sources: Vec<ProposalSource>,
}

impl ProposalBatch {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            logits: Vec::new(),
            labels: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn push(&mut self, logits: &[f64], label: usize, source: ProposalSource) -> Result<()> {
        if logits.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: logits.len(),
            });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("proposal logits"));
        }
        if label >= self.dim {
            return Err(Error::LabelOutOfRange {
                label,
                dim: self.dim,
            });
        }
        self.logits.extend_from_slice(logits);
        self.labels.push(label);
        self.sources.push(source);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logits_of(&self, idx: usize) -> &[f64] {
        &self.logits[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn label_of(&self, idx: usize) -> usize {
        self.labels[idx]
    }

    pub fn source_of(&self, idx: usize) -> ProposalSource {
        self.sources[idx]
    }

    /// Per-proposal `(loss, grad)` in batch order, using the labeled loss for
    /// labeled proposals and the unlabeled loss otherwise.
    pub fn losses_and_grads(
        &self,
        labeled_spec: &LossSpec,
        unlabeled_spec: &LossSpec,
    ) -> Result<Vec<(f64, Vec<f64>)>> {
        (0..self.len())
            .map(|j| {
                let spec = match self.sources[j] {
                    ProposalSource::Labeled => labeled_spec,
                    ProposalSource::Unlabeled => unlabeled_spec,
                };
                loss_and_grad(self.logits_of(j), self.labels[j], spec)
            })
            .collect()
    }
}

/// Accumulator for the gradient matrix `G` and its EMA.
#[derive(Debug, Clone)]
pub struct GradientLedger {
    raw: SquareMatrix,
    ema: SquareMatrix,
    eta_g: f64,
}

impl GradientLedger {
    /// `eta_g` is the EMA coefficient in `[0, 1]`; both matrices start at zero.
    pub fn new(dim: usize, eta_g: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_g) {
            return Err(Error::InvalidInput(alloc::format!(
                "eta_g must be in [0, 1], got {eta_g}"
            )));
        }
        Ok(Self {
            raw: SquareMatrix::zeros(dim),
            ema: SquareMatrix::zeros(dim),
            eta_g,
        })
    }

    pub fn dim(&self) -> usize {
        self.raw.dim()
    }

    pub fn raw(&self) -> &SquareMatrix {
        &self.raw
    }

    pub fn ema(&self) -> &SquareMatrix {
        &self.ema
    }

    /// Replaces the EMA with a snapshot, e.g. loaded from a text dump.
    pub fn set_ema(&mut self, ema: SquareMatrix) -> Result<()> {
        if ema.dim() != self.raw.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.raw.dim(),
                got: ema.dim(),
            });
        }
        self.ema = ema;
        Ok(())
    }

    /// Adds each proposal's gradient vector into the column of its label.
    /// Accumulation follows batch order so repeated runs are bit-identical.
    pub fn accumulate_batch(&mut self, batch: &ProposalBatch, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                got: grads.len(),
            });
        }
        let dim = self.raw.dim();
        if batch.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: batch.dim(),
            });
        }
        for (j, grad) in grads.iter().enumerate() {
            if grad.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: grad.len(),
                });
            }
            let col = batch.label_of(j);
            for (i, g) in grad.iter().enumerate() {
                self.raw.add_to(i, col, *g);
            }
        }
        Ok(())
    }

    /// `ema <- eta_g * ema + (1 - eta_g) * raw`; raw is reset for the next batch.
    pub fn ema_update(&mut self) -> Result<()> {
        if !self.raw.is_finite() || !self.ema.is_finite() {
            return Err(Error::NonFinite("gradient ledger"));
        }
        let dim = self.raw.dim();
        for i in 0..dim {
            for k in 0..dim {
                let v = self.eta_g * self.ema.get(i, k) + (1.0 - self.eta_g) * self.raw.get(i, k);
                self.ema.set(i, k, v);
            }
        }
        self.raw.fill(0.0);
        Ok(())
    }
}
