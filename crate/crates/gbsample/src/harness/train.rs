//! The generation-based training loop.
//!
//! Generation 0 trains on labeled data only (burn-in), after which the
//! teacher is a hard copy of the student so the first pseudo labels come from
//! a trained model. Each later generation regenerates pseudo labels with the
//! current teacher and thresholds, recomputes the rebalancing rates, then
//! trains for the step budget with the ledger, weight solver and threshold
//! refresh running alongside the optimizer.

use anyhow::{Context, Result};
use gbsample_core::ledger::{GradientLedger, ProposalSource};
use gbsample_core::loss::LossSpec;
use gbsample_core::sampler::{
    class_repeat_rates, count_class_images, epsilon_schedule, image_repeat_rate, image_rfs_factor,
    realize_repeats,
};
use gbsample_core::thresholds::{gbt_thresholds, ScoreHistory, ThresholdTable};
use gbsample_core::weights::{jacobi_target, ClassWeights};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{PseudoRefresh, SimConfig};
use crate::rng::{substream, STREAM_DATA, STREAM_INIT, STREAM_SAMPLER};

use super::metrics::{eval_balanced_accuracy, pseudo_label_pr};
use super::model::{LinearClassifier, TeacherState};
use super::step::{filter_predictions, student_step, teacher_predictions, BatchProposal};
use super::synth::{generate_task, SyntheticTask};
use super::{GenerationRecord, PseudoLabelSet, RunOutput};

pub(crate) const INIT_SCALE: f64 = 0.01;

pub(crate) fn loss_specs(cfg: &SimConfig) -> (LossSpec, LossSpec) {
    let spec = if cfg.toggles.focal_loss {
        LossSpec::focal(cfg.hyper.gamma_focal)
    } else {
        LossSpec::cross_entropy()
    };
    (spec, spec)
}

pub(crate) fn draw_from_pool(rng: &mut ChaCha8Rng, count: usize, pool: &[usize]) -> Vec<usize> {
    (0..count).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

/// Class list of a labeled example viewed as a single-annotation image.
fn labeled_class_lists(task: &SyntheticTask, n_foreground: usize) -> Vec<Vec<usize>> {
    task.labeled
        .iter()
        .map(|ex| {
            if ex.label < n_foreground {
                vec![ex.label]
            } else {
                Vec::new()
            }
        })
        .collect()
}

/// Builds the batch items for one step: labeled proposals plus the
/// pseudo-labeled proposals of the sampled unlabeled images. Proposals the
/// teacher did not label are dropped rather than trained as background — a
/// below-threshold score is abstention, not evidence of background.
pub(crate) fn assemble_batch<'a>(
    task: &'a SyntheticTask,
    labeled_ids: &[usize],
    unlabeled_ids: &[usize],
    pseudo: &PseudoLabelSet,
) -> Vec<BatchProposal<'a>> {
    let mut items = Vec::new();
    for &i in labeled_ids {
        let ex = &task.labeled[i];
        items.push(BatchProposal {
            features: &ex.features,
            label: ex.label,
            source: ProposalSource::Labeled,
        });
    }
    for &img_idx in unlabeled_ids {
        let img = &task.unlabeled[img_idx];
        for pl in &pseudo[img_idx] {
            items.push(BatchProposal {
                features: &img.features[pl.proposal],
                label: pl.class,
                source: ProposalSource::Unlabeled,
            });
        }
    }
    items
}

fn rebuild_table(
    cfg: &SimConfig,
    class_weights: &ClassWeights,
    hist: &ScoreHistory,
) -> Result<ThresholdTable> {
    let n_fg = cfg.task.n_foreground();
    let theta_p = if cfg.toggles.gbt {
        gbt_thresholds(class_weights.foreground_weights(), cfg.hyper.theta_base)?
    } else {
        vec![cfg.hyper.theta_base; n_fg]
    };
    let theta_c = cfg
        .toggles
        .score_component
        .then(|| hist.score_thresholds());
    Ok(ThresholdTable::new(cfg.hyper.theta_base, theta_p, theta_c)?)
}

pub fn run_generations(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let n_fg = cfg.task.n_foreground();
    let dim = cfg.task.dim();
    let hyper = &cfg.hyper;

    let task = generate_task(&cfg.task, &mut substream(cfg.seed, STREAM_DATA))
        .context("generating synthetic task")?;
    let mut init_rng = substream(cfg.seed, STREAM_INIT);
    let mut student = LinearClassifier::new(dim, cfg.task.feature_dim, INIT_SCALE, &mut init_rng);
    let mut teacher = TeacherState::from_student(&student, hyper.eta_p);
    let mut class_weights = ClassWeights::new(dim, hyper.beta, hyper.lr_align)?;
    let mut ledger = GradientLedger::new(dim, hyper.eta_g)?;
    let mut table = ThresholdTable::fixed(n_fg, hyper.theta_base)?;
    let mut hist = ScoreHistory::with_defaults(n_fg, hyper.theta_base)?;
    let mut sampler_rng = substream(cfg.seed, STREAM_SAMPLER);
    let (spec_l, spec_u) = loss_specs(cfg);

    let labeled_classes = labeled_class_lists(&task, n_fg);
    let n_labeled = task.labeled.len();
    let n_unlabeled = task.unlabeled.len();
    let batch_proposals =
        (hyper.labeled_images_per_batch + hyper.unlabeled_images_per_batch)
            * cfg.task.proposals_per_image;

    let mut records = Vec::new();

    // generation 0: labeled-only burn-in
    let mut burn_loss = 0.0;
    let all_labeled: Vec<usize> = (0..n_labeled).collect();
    for step in 1..=hyper.burn_in_steps {
        let ids = draw_from_pool(&mut sampler_rng, batch_proposals, &all_labeled);
        let items: Vec<BatchProposal<'_>> = ids
            .iter()
            .map(|&i| BatchProposal {
                features: &task.labeled[i].features,
                label: task.labeled[i].label,
                source: ProposalSource::Labeled,
            })
            .collect();
        let out = student_step(
            &mut student,
            &items,
            class_weights.weights(),
            class_weights.labeled_weights(),
            &spec_l,
            &spec_u,
            hyper.lr,
            hyper.momentum,
            hyper.weight_decay,
            Some(&mut ledger),
        )
        .with_context(|| format!("burn-in step {step}"))?;
        burn_loss += out.loss / out.n_proposals.max(1) as f64;
        if cfg.toggles.gbr {
            let target = jacobi_target(ledger.ema(), class_weights.weights())?;
            class_weights.align_step(&target)?;
        }
        teacher.ema_update(&student)?;
    }
    teacher.copy_from(&student);

    records.push(GenerationRecord {
        generation: 0,
        epsilon: 0.0,
        pseudo_count: 0,
        precision: vec![None; n_fg],
        recall: vec![None; n_fg],
        weights: class_weights.weights().to_vec(),
        labeled_weights: class_weights.labeled_weights().to_vec(),
        thresholds: table.theta().to_vec(),
        class_image_counts: vec![0; n_fg],
        class_repeat_rates: vec![1.0; n_fg],
        mean_loss: burn_loss / hyper.burn_in_steps.max(1) as f64,
        eval: eval_balanced_accuracy(&teacher.model, &task.eval, cfg.task.n_majority, n_fg)?,
    });

    for generation in 1..=hyper.generations {
        let gen_ctx = |what: &str| format!("generation {generation}: {what}");

        // regenerate pseudo labels with the current teacher and thresholds
        let predictions = teacher_predictions(&teacher.model, &task.unlabeled);
        if cfg.toggles.score_component {
            for per_image in &predictions {
                for (_, pred) in per_image {
                    hist.record(pred.class, pred.score)
                        .context(gen_ctx("recording score history"))?;
                }
            }
            table = rebuild_table(cfg, &class_weights, &hist)?;
        }
        let pseudo =
            filter_predictions(&predictions, &table).context(gen_ctx("filtering pseudo labels"))?;
        let (precision, recall) = pseudo_label_pr(&pseudo, &task.unlabeled, n_fg);
        let pseudo_count: usize = pseudo.iter().map(|v| v.len()).sum();

        // rebalancing rates for this generation
        let epsilon = epsilon_schedule(hyper.crs_gamma, generation, hyper.generations)
            .context(gen_ctx("epsilon schedule"))?;
        let mut class_lists: Vec<&[usize]> =
            labeled_classes.iter().map(|v| v.as_slice()).collect();
        let pseudo_classes: Vec<Vec<usize>> = pseudo
            .iter()
            .map(|labels| labels.iter().map(|pl| pl.class).collect())
            .collect();
        class_lists.extend(pseudo_classes.iter().map(|v| v.as_slice()));
        let m = count_class_images(class_lists, n_fg);
        let s_rates = class_repeat_rates(&m, epsilon, (n_labeled + n_unlabeled) as u64)
            .context(gen_ctx("class repeat rates"))?;

        let unlabeled_epoch: Vec<usize> = if cfg.toggles.crs {
            let mut epoch = Vec::new();
            for (img_idx, labels) in pseudo.iter().enumerate() {
                let rate = if cfg.toggles.naive_resampling {
                    // frequency-only: ignore scores and thresholds
                    labels
                        .iter()
                        .map(|pl| s_rates[pl.class])
                        .fold(0.0, f64::max)
                } else {
                    let scored: Vec<(usize, f64)> =
                        labels.iter().map(|pl| (pl.class, pl.score)).collect();
                    image_repeat_rate(&scored, &s_rates, table.theta())
                        .context(gen_ctx("image repeat rate"))?
                };
                let count = realize_repeats(rate, sampler_rng.gen::<f64>());
                epoch.extend(std::iter::repeat_n(img_idx, count as usize));
            }
            epoch
        } else {
            (0..n_unlabeled).collect()
        };

        let labeled_epoch: Vec<usize> = if cfg.toggles.crs {
            let labeled_m = count_class_images(
                labeled_classes.iter().map(|v| v.as_slice()),
                n_fg,
            );
            let rfs_rates: Vec<f64> = labeled_m
                .iter()
                .map(|&mc| {
                    if mc == 0 {
                        1.0
                    } else {
                        (hyper.rfs_tau / (mc as f64 / n_labeled as f64)).sqrt().max(1.0)
                    }
                })
                .collect();
            let mut epoch = Vec::new();
            for (i, classes) in labeled_classes.iter().enumerate() {
                let factor = image_rfs_factor(classes, &rfs_rates);
                let count = realize_repeats(factor, sampler_rng.gen::<f64>());
                epoch.extend(std::iter::repeat_n(i, count as usize));
            }
            epoch
        } else {
            all_labeled.clone()
        };

        // train for the generation's step budget
        let mut loss_sum = 0.0;
        for step in 1..=hyper.steps_per_generation {
            let labeled_ids = draw_from_pool(
                &mut sampler_rng,
                hyper.labeled_images_per_batch * cfg.task.proposals_per_image,
                &labeled_epoch,
            );
            let unlabeled_ids = draw_from_pool(
                &mut sampler_rng,
                hyper.unlabeled_images_per_batch,
                &unlabeled_epoch,
            );
            let fresh_pseudo;
            let pseudo_in_force = match hyper.pseudo_refresh {
                PseudoRefresh::PerGeneration => &pseudo,
                PseudoRefresh::PerStep => {
                    // re-predict just the sampled images with the current teacher
                    let mut per_step = pseudo.clone();
                    for &img_idx in &unlabeled_ids {
                        let preds = teacher_predictions(
                            &teacher.model,
                            std::slice::from_ref(&task.unlabeled[img_idx]),
                        );
                        per_step[img_idx] = filter_predictions(&preds, &table)
                            .context(gen_ctx("per-step pseudo refresh"))?
                            .remove(0);
                    }
                    fresh_pseudo = per_step;
                    &fresh_pseudo
                }
            };
            let items =
                assemble_batch(&task, &labeled_ids, &unlabeled_ids, pseudo_in_force);
            let out = student_step(
                &mut student,
                &items,
                class_weights.weights(),
                class_weights.labeled_weights(),
                &spec_l,
                &spec_u,
                hyper.lr,
                hyper.momentum,
                hyper.weight_decay,
                Some(&mut ledger),
            )
            .with_context(|| format!("generation {generation}, step {step}"))?;
            loss_sum += out.loss / out.n_proposals.max(1) as f64;

            if cfg.toggles.gbr {
                let target = jacobi_target(ledger.ema(), class_weights.weights())
                    .with_context(|| format!("generation {generation}, step {step}: solver"))?;
                class_weights.align_step(&target)?;
            }
            if step % hyper.threshold_refresh_interval == 0 {
                table = rebuild_table(cfg, &class_weights, &hist)?;
            }
            teacher.ema_update(&student)?;
        }

        records.push(GenerationRecord {
            generation,
            epsilon,
            pseudo_count,
            precision,
            recall,
            weights: class_weights.weights().to_vec(),
            labeled_weights: class_weights.labeled_weights().to_vec(),
            thresholds: table.theta().to_vec(),
            class_image_counts: m,
            class_repeat_rates: s_rates,
            mean_loss: loss_sum / hyper.steps_per_generation as f64,
            eval: eval_balanced_accuracy(&teacher.model, &task.eval, cfg.task.n_majority, n_fg)
                .context(gen_ctx("evaluation"))?,
        });
    }

    Ok(RunOutput { records })
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::config::{Preset, SimConfig};

    fn tiny_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.seed = 17;
        cfg.task.n_majority = 3;
        cfg.task.n_minority = 2;
        cfg.task.labeled_per_majority = 40;
        cfg.task.labeled_per_minority = 5;
        cfg.task.labeled_background = 80;
        cfg.task.unlabeled_images = 60;
        cfg.task.eval_per_class = 10;
        cfg.hyper.generations = 2;
        cfg.hyper.steps_per_generation = 30;
        cfg.hyper.burn_in_steps = 30;
        cfg.hyper.threshold_refresh_interval = 10;
        cfg
    }

    #[test]
    fn timeline_is_deterministic() {
        let mut cfg = tiny_config();
        cfg.toggles = Preset::Full.toggles();
        let a = run_generations(&cfg).unwrap();
        let b = run_generations(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disabled_modules_keep_weights_at_one() {
        let cfg = tiny_config();
        let out = run_generations(&cfg).unwrap();
        for rec in &out.records {
            assert!(rec.weights.iter().all(|w| *w == 1.0));
            assert!(rec.thresholds.iter().all(|t| *t == cfg.hyper.theta_base));
        }
    }

    #[test]
    fn weight_invariants_hold_across_run() {
        let mut cfg = tiny_config();
        cfg.toggles = Preset::Full.toggles();
        let out = run_generations(&cfg).unwrap();
        let dim = cfg.task.dim() as f64;
        for rec in &out.records {
            let sum: f64 = rec.weights.iter().sum();
            assert!((sum - dim).abs() < 1e-6, "sum {sum}");
            assert!(rec.weights.iter().all(|w| *w >= 1e-3));
        }
    }

    #[test]
    fn per_step_refresh_runs() {
        let mut cfg = tiny_config();
        cfg.hyper.pseudo_refresh = crate::config::PseudoRefresh::PerStep;
        cfg.hyper.generations = 1;
        let out = run_generations(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
    }
}
