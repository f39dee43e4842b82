//! Pseudo-label precision/recall and balanced eval accuracy.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use super::model::LinearClassifier;
use super::synth::{LabeledExample, UnlabeledImage};
use super::PseudoLabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub overall: f64,
    /// Mean of per-class accuracies over all classes including background.
    pub balanced: f64,
    pub per_class: Vec<f64>,
    pub majority_mean: f64,
    pub minority_mean: f64,
}

/// Per-class accuracy on a class-balanced eval set, with group means over the
/// majority/minority foreground partitions.
pub fn eval_balanced_accuracy(
    model: &LinearClassifier,
    eval: &[LabeledExample],
    n_majority: usize,
    n_foreground: usize,
) -> Result<EvalMetrics> {
    let dim = n_foreground + 1;
    let mut correct = vec![0u64; dim];
    let mut total = vec![0u64; dim];
    for ex in eval {
        let logits = model.forward(&ex.features);
        let pred = argmax(&logits);
        total[ex.label] += 1;
        if pred == ex.label {
            correct[ex.label] += 1;
        }
    }
    if total.contains(&0) {
        bail!("eval set must contain every class");
    }
    let per_class: Vec<f64> = correct
        .iter()
        .zip(&total)
        .map(|(c, t)| *c as f64 / *t as f64)
        .collect();
    let overall = correct.iter().sum::<u64>() as f64 / total.iter().sum::<u64>() as f64;
    let balanced = per_class.iter().sum::<f64>() / dim as f64;
    let majority_mean = mean(&per_class[..n_majority]);
    let minority_mean = mean(&per_class[n_majority..n_foreground]);
    Ok(EvalMetrics {
        overall,
        balanced,
        per_class,
        majority_mean,
        minority_mean,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-class pseudo-label precision and recall against the hidden ground
/// truth. `None` marks an undefined value (empty denominator): precision when
/// a class received no pseudo labels, recall when the pool holds no true
/// instances of it.
pub fn pseudo_label_pr(
    pseudo: &PseudoLabelSet,
    pool: &[UnlabeledImage],
    n_foreground: usize,
) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut emitted = vec![0u64; n_foreground];
    let mut correct = vec![0u64; n_foreground];
    let mut true_instances = vec![0u64; n_foreground];
    for img in pool {
        for &c in &img.hidden {
            if c < n_foreground {
                true_instances[c] += 1;
            }
        }
    }
    for (img_idx, labels) in pseudo.iter().enumerate() {
        for label in labels {
            emitted[label.class] += 1;
            if pool[img_idx].hidden[label.proposal] == label.class {
                correct[label.class] += 1;
            }
        }
    }
    let precision = (0..n_foreground)
        .map(|c| {
            if emitted[c] == 0 {
                None
            } else {
                Some(correct[c] as f64 / emitted[c] as f64)
            }
        })
        .collect();
    let recall = (0..n_foreground)
        .map(|c| {
            if true_instances[c] == 0 {
                None
            } else {
                Some(correct[c] as f64 / true_instances[c] as f64)
            }
        })
        .collect();
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::PseudoLabel;

    fn image(hidden: Vec<usize>) -> UnlabeledImage {
        UnlabeledImage {
            features: vec![vec![0.0]; hidden.len()],
            hidden,
        }
    }

    #[test]
    fn perfect_pseudo_labels() {
        let pool = vec![image(vec![0, 0, 1])];
        let pseudo = vec![vec![
            PseudoLabel { proposal: 0, class: 0, score: 0.9 },
            PseudoLabel { proposal: 1, class: 0, score: 0.9 },
            PseudoLabel { proposal: 2, class: 1, score: 0.9 },
        ]];
        let (p, r) = pseudo_label_pr(&pseudo, &pool, 2);
        assert_eq!(p, vec![Some(1.0), Some(1.0)]);
        assert_eq!(r, vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn empty_denominators_are_undefined_not_zero() {
        let pool = vec![image(vec![0, 0])]; // class 1 absent from pool
        let pseudo: PseudoLabelSet = vec![vec![]];
        let (p, r) = pseudo_label_pr(&pseudo, &pool, 2);
        assert_eq!(p, vec![None, None]);
        assert_eq!(r[0], Some(0.0)); // instances exist, none found
        assert_eq!(r[1], None); // no true instances at all
    }

    #[test]
    fn hand_counted_case() {
        // class 0: 3 correct + 1 wrong pseudo labels, 6 true instances
        let pool = vec![image(vec![0, 0, 0, 1, 0, 0, 0])];
        let pseudo = vec![vec![
            PseudoLabel { proposal: 0, class: 0, score: 0.9 },
            PseudoLabel { proposal: 1, class: 0, score: 0.9 },
            PseudoLabel { proposal: 2, class: 0, score: 0.9 },
            PseudoLabel { proposal: 3, class: 0, score: 0.9 }, // actually class 1
        ]];
        let (p, r) = pseudo_label_pr(&pseudo, &pool, 2);
        assert_eq!(p[0], Some(0.75));
        assert_eq!(r[0], Some(0.5));
    }

    #[test]
    fn constant_predictor_scores_one_over_k() {
        use crate::rng::{substream, STREAM_INIT};
        let mut rng = substream(0, STREAM_INIT);
        let mut model = LinearClassifier::new(3, 2, 0.0, &mut rng);
        model.bias = vec![1.0, 0.0, 0.0]; // always predicts class 0
        let eval: Vec<LabeledExample> = (0..3)
            .flat_map(|c| {
                (0..4).map(move |_| LabeledExample {
                    features: vec![0.0, 0.0],
                    label: c,
                })
            })
            .collect();
        let m = eval_balanced_accuracy(&model, &eval, 1, 2).unwrap();
        assert!((m.overall - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_class, vec![1.0, 0.0, 0.0]);
        assert_eq!(m.majority_mean, 1.0);
        assert_eq!(m.minority_mean, 0.0);
    }

    #[test]
    fn empty_class_is_error() {
        use crate::rng::{substream, STREAM_INIT};
        let mut rng = substream(0, STREAM_INIT);
        let model = LinearClassifier::new(3, 2, 0.0, &mut rng);
        let eval = vec![LabeledExample {
            features: vec![0.0, 0.0],
            label: 0,
        }];
        assert!(eval_balanced_accuracy(&model, &eval, 1, 2).is_err());
    }
}
