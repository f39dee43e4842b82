//! Single-step primitives: the weighted student update and teacher
//! pseudo-label generation. Shared by the full loop and the reference
//! baseline so both follow the exact same numeric path.

use anyhow::{bail, Context, Result};
use gbsample_core::ledger::{GradientLedger, ProposalBatch, ProposalSource};
use gbsample_core::loss::{softmax, LossSpec};
use gbsample_core::thresholds::{filter_pseudo_labels, Prediction, ThresholdTable};

use super::metrics::argmax;
use super::model::LinearClassifier;
use super::synth::UnlabeledImage;
use super::{PseudoLabel, PseudoLabelSet};

/// One proposal entering a training step.
#[derive(Debug, Clone, Copy)]
pub struct BatchProposal<'a> {
    pub features: &'a [f64],
    pub label: usize,
    pub source: ProposalSource,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Weighted classification loss summed over the batch.
    pub loss: f64,
    pub n_proposals: usize,
}

/// Forward, weighted loss, backward and momentum-SGD update.
///
/// The total loss is `sum_i w^l_i * sum_{labeled, c=i} f(x) +
/// sum_i w_i * sum_{pseudo, c=i} f(x)`. The ledger, when given, receives the
/// unweighted logit gradients of the very same batch.
#[allow(clippy::too_many_arguments)]
pub fn student_step(
    model: &mut LinearClassifier,
    items: &[BatchProposal<'_>],
    weights: &[f64],
    labeled_weights: &[f64],
    labeled_spec: &LossSpec,
    unlabeled_spec: &LossSpec,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    ledger: Option<&mut GradientLedger>,
) -> Result<StepOutcome> {
    let dim = model.out_dim;
    if weights.len() != dim || labeled_weights.len() != dim {
        bail!("weight vector length does not match model output");
    }
    let mut batch = ProposalBatch::new(dim);
    for item in items {
        let logits = model.forward(item.features);
        batch.push(&logits, item.label, item.source)?;
    }
    let per_proposal = batch.losses_and_grads(labeled_spec, unlabeled_spec)?;

    let mut total_loss = 0.0;
    let mut grad_w = vec![0.0; dim * model.in_dim];
    let mut grad_b = vec![0.0; dim];
    for (j, (loss, grad)) in per_proposal.iter().enumerate() {
        let item = &items[j];
        let w = match item.source {
            ProposalSource::Labeled => labeled_weights[item.label],
            ProposalSource::Unlabeled => weights[item.label],
        };
        total_loss += w * loss;
        for (o, g) in grad.iter().enumerate() {
            let wg = w * g;
            grad_b[o] += wg;
            let row = &mut grad_w[o * model.in_dim..(o + 1) * model.in_dim];
            for (r, x) in row.iter_mut().zip(item.features) {
                *r += wg * x;
            }
        }
    }
    if !total_loss.is_finite() {
        bail!("non-finite training loss (diverged)");
    }
    let scale = 1.0 / items.len().max(1) as f64;
    model.sgd_step(&grad_w, &grad_b, lr, momentum, weight_decay, scale)?;

    if let Some(ledger) = ledger {
        let unweighted: Vec<Vec<f64>> = per_proposal.into_iter().map(|(_, g)| g).collect();
        ledger.accumulate_batch(&batch, &unweighted)?;
        ledger.ema_update()?;
    }
    Ok(StepOutcome {
        loss: total_loss,
        n_proposals: items.len(),
    })
}

/// Teacher softmax over every proposal of every unlabeled image: the argmax
/// class and its score, skipping proposals the teacher calls background.
pub fn teacher_predictions(
    teacher: &LinearClassifier,
    pool: &[UnlabeledImage],
) -> Vec<Vec<(usize, Prediction)>> {
    let background = teacher.out_dim - 1;
    pool.iter()
        .map(|img| {
            img.features
                .iter()
                .enumerate()
                .filter_map(|(j, x)| {
                    let p = softmax(&teacher.forward(x));
                    let class = argmax(&p);
                    if class == background {
                        None
                    } else {
                        Some((
                            j,
                            Prediction {
                                class,
                                score: p[class],
                                bbox: [0.0; 4],
                            },
                        ))
                    }
                })
                .collect()
        })
        .collect()
}

/// Threshold-filters raw teacher predictions into a pseudo-label set.
pub fn filter_predictions(
    predictions: &[Vec<(usize, Prediction)>],
    table: &ThresholdTable,
) -> Result<PseudoLabelSet> {
    predictions
        .iter()
        .map(|per_image| {
            per_image
                .iter()
                .map(|(j, pred)| {
                    let kept = filter_pseudo_labels(core::slice::from_ref(pred), table)
                        .context("filtering pseudo labels")?;
                    Ok(kept.first().map(|p| PseudoLabel {
                        proposal: *j,
                        class: p.class,
                        score: p.score,
                    }))
                })
                .filter_map(|r| r.transpose())
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Teacher prediction plus threshold filtering in one call.
pub fn generate_pseudo_labels(
    teacher: &LinearClassifier,
    pool: &[UnlabeledImage],
    table: &ThresholdTable,
) -> Result<PseudoLabelSet> {
    filter_predictions(&teacher_predictions(teacher, pool), table)
}
