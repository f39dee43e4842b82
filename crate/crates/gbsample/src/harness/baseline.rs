//! Straight-line fixed-threshold self-training reference.
//!
//! An intentionally plain re-implementation of the training loop with every
//! rebalancing module removed: uniform weights, one fixed confidence
//! threshold, uniform sampling. It shares only the single-step primitives
//! with the full loop, so running the full loop with all toggles off and
//! comparing timelines against this function checks that the disabled
//! modules are truly inert rather than merely small.

use anyhow::{Context, Result};
use gbsample_core::ledger::{GradientLedger, ProposalSource};
use gbsample_core::thresholds::ThresholdTable;
use gbsample_core::weights::ClassWeights;
use rand::Rng;

use crate::config::SimConfig;
use crate::rng::{substream, STREAM_DATA, STREAM_INIT, STREAM_SAMPLER};

use super::metrics::{eval_balanced_accuracy, pseudo_label_pr};
use super::model::{LinearClassifier, TeacherState};
use super::step::{filter_predictions, student_step, teacher_predictions, BatchProposal};
use super::synth::generate_task;
use super::train::{assemble_batch, loss_specs, INIT_SCALE};
use super::{GenerationRecord, RunOutput};

use gbsample_core::sampler::{class_repeat_rates, count_class_images, epsilon_schedule};

/// Fixed-threshold self-training with uniform weights and uniform sampling.
/// Consumes the same named RNG substreams in the same order as the full loop
/// with all toggles disabled, so the two timelines must be bitwise equal.
pub fn run_fixed_threshold_reference(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let n_fg = cfg.task.n_foreground();
    let dim = cfg.task.dim();
    let hyper = &cfg.hyper;

    let task = generate_task(&cfg.task, &mut substream(cfg.seed, STREAM_DATA))
        .context("generating synthetic task")?;
    let mut init_rng = substream(cfg.seed, STREAM_INIT);
    let mut student = LinearClassifier::new(dim, cfg.task.feature_dim, INIT_SCALE, &mut init_rng);
    let mut teacher = TeacherState::from_student(&student, hyper.eta_p);
    let mut sampler_rng = substream(cfg.seed, STREAM_SAMPLER);
    let (spec_l, spec_u) = loss_specs(cfg);

    // uniform weights, fixed thresholds, and a ledger that is updated exactly
    // as in the full loop (it feeds nothing back here)
    let neutral = ClassWeights::new(dim, hyper.beta, hyper.lr_align)?;
    let table = ThresholdTable::fixed(n_fg, hyper.theta_base)?;
    let mut ledger = GradientLedger::new(dim, hyper.eta_g)?;

    let n_labeled = task.labeled.len();
    let n_unlabeled = task.unlabeled.len();
    let batch_proposals = (hyper.labeled_images_per_batch + hyper.unlabeled_images_per_batch)
        * cfg.task.proposals_per_image;
    let mut records = Vec::new();

    let mut burn_loss = 0.0;
    for step in 1..=hyper.burn_in_steps {
        let items: Vec<BatchProposal<'_>> = (0..batch_proposals)
            .map(|_| {
                let ex = &task.labeled[sampler_rng.gen_range(0..n_labeled)];
                BatchProposal {
                    features: &ex.features,
                    label: ex.label,
                    source: ProposalSource::Labeled,
                }
            })
            .collect();
        let out = student_step(
            &mut student,
            &items,
            neutral.weights(),
            neutral.labeled_weights(),
            &spec_l,
            &spec_u,
            hyper.lr,
            hyper.momentum,
            hyper.weight_decay,
            Some(&mut ledger),
        )
        .with_context(|| format!("reference burn-in step {step}"))?;
        burn_loss += out.loss / out.n_proposals.max(1) as f64;
        teacher.ema_update(&student)?;
    }
    teacher.copy_from(&student);

    records.push(GenerationRecord {
        generation: 0,
        epsilon: 0.0,
        pseudo_count: 0,
        precision: vec![None; n_fg],
        recall: vec![None; n_fg],
        weights: neutral.weights().to_vec(),
        labeled_weights: neutral.labeled_weights().to_vec(),
        thresholds: table.theta().to_vec(),
        class_image_counts: vec![0; n_fg],
        class_repeat_rates: vec![1.0; n_fg],
        mean_loss: burn_loss / hyper.burn_in_steps.max(1) as f64,
        eval: eval_balanced_accuracy(&teacher.model, &task.eval, cfg.task.n_majority, n_fg)?,
    });

    for generation in 1..=hyper.generations {
        let predictions = teacher_predictions(&teacher.model, &task.unlabeled);
        let pseudo = filter_predictions(&predictions, &table)
            .with_context(|| format!("reference generation {generation}"))?;
        let (precision, recall) = pseudo_label_pr(&pseudo, &task.unlabeled, n_fg);
        let pseudo_count: usize = pseudo.iter().map(|v| v.len()).sum();

        // diagnostics only: the reference never resamples
        let epsilon = epsilon_schedule(hyper.crs_gamma, generation, hyper.generations)?;
        let labeled_classes: Vec<Vec<usize>> = task
            .labeled
            .iter()
            .map(|ex| if ex.label < n_fg { vec![ex.label] } else { Vec::new() })
            .collect();
        let mut class_lists: Vec<&[usize]> =
            labeled_classes.iter().map(|v| v.as_slice()).collect();
        let pseudo_classes: Vec<Vec<usize>> = pseudo
            .iter()
            .map(|labels| labels.iter().map(|pl| pl.class).collect())
            .collect();
        class_lists.extend(pseudo_classes.iter().map(|v| v.as_slice()));
        let m = count_class_images(class_lists, n_fg);
        let s_rates = class_repeat_rates(&m, epsilon, (n_labeled + n_unlabeled) as u64)?;

        let mut loss_sum = 0.0;
        for step in 1..=hyper.steps_per_generation {
            let labeled_ids: Vec<usize> = (0..hyper.labeled_images_per_batch
                * cfg.task.proposals_per_image)
                .map(|_| sampler_rng.gen_range(0..n_labeled))
                .collect();
            let unlabeled_ids: Vec<usize> = (0..hyper.unlabeled_images_per_batch)
                .map(|_| sampler_rng.gen_range(0..n_unlabeled))
                .collect();
            let items = assemble_batch(&task, &labeled_ids, &unlabeled_ids, &pseudo);
            let out = student_step(
                &mut student,
                &items,
                neutral.weights(),
                neutral.labeled_weights(),
                &spec_l,
                &spec_u,
                hyper.lr,
                hyper.momentum,
                hyper.weight_decay,
                Some(&mut ledger),
            )
            .with_context(|| format!("reference generation {generation}, step {step}"))?;
            loss_sum += out.loss / out.n_proposals.max(1) as f64;
            teacher.ema_update(&student)?;
        }

        records.push(GenerationRecord {
            generation,
            epsilon,
            pseudo_count,
            precision,
            recall,
            weights: neutral.weights().to_vec(),
            labeled_weights: neutral.labeled_weights().to_vec(),
            thresholds: table.theta().to_vec(),
            class_image_counts: m,
            class_repeat_rates: s_rates,
            mean_loss: loss_sum / hyper.steps_per_generation as f64,
            eval: eval_balanced_accuracy(&teacher.model, &task.eval, cfg.task.n_majority, n_fg)?,
        });
    }

    Ok(RunOutput { records })
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::harness::run_generations;

    #[test]
    fn matches_full_loop_with_toggles_off() {
        let mut cfg = SimConfig::default();
        cfg.seed = 23;
        cfg.task.n_majority = 3;
        cfg.task.n_minority = 2;
        cfg.task.labeled_per_majority = 30;
        cfg.task.labeled_per_minority = 5;
        cfg.task.labeled_background = 50;
        cfg.task.unlabeled_images = 40;
        cfg.task.eval_per_class = 8;
        cfg.hyper.generations = 2;
        cfg.hyper.steps_per_generation = 20;
        cfg.hyper.burn_in_steps = 20;
        let full = run_generations(&cfg).unwrap();
        let reference = run_fixed_threshold_reference(&cfg).unwrap();
        assert_eq!(full, reference);
    }
}
