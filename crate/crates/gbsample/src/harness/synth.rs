//! Synthetic long-tailed proposal data.
//!
//! Features are class-conditional Gaussian clusters in `feature_dim`
//! dimensions; the background is one more cluster. The labeled pool follows
//! the configured imbalance (many instances per majority class, few per
//! minority class), the unlabeled pool follows the scenario flag, and the
//! eval set is class-balanced. Everything is deterministic given the data
//! substream.

use anyhow::{bail, Result};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{Scenario, TaskConfig};

/// One labeled proposal. At desk scale each labeled proposal stands in for a
/// single-annotation image, which keeps the repeat-factor bookkeeping
/// image-level like the real pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// An unlabeled image: a fixed set of proposals with hidden ground truth
/// (used only by metrics, never by training).
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledImage {
    pub features: Vec<Vec<f64>>,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    /// Cluster centers, one per class including background (last).
    pub centers: Vec<Vec<f64>>,
    pub labeled: Vec<LabeledExample>,
    pub unlabeled: Vec<UnlabeledImage>,
    pub eval: Vec<LabeledExample>,
}

fn random_center(dim: usize, norm: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len > 0.0 {
        v.iter_mut().for_each(|x| *x *= norm / len);
    }
    v
}

fn sample_point(center: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn generate_task(cfg: &TaskConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticTask> {
    let n_fg = cfg.n_foreground();
    if n_fg == 0 {
        bail!("task needs at least one foreground class");
    }
    let dim = cfg.dim();
    let background = n_fg;

    // majority classes are well-separated clusters on a sphere; minority
    // classes are fine-grained variants of one another, packed around a shared
    // anchor in a rare region (mutually confusable, far from the majority
    // clusters); the background is a cluster at the origin, optionally more
    // diffuse than the object classes
    let mut centers: Vec<Vec<f64>> = (0..cfg.n_majority)
        .map(|_| random_center(cfg.feature_dim, cfg.center_separation, rng))
        .collect();
    let anchor = random_center(cfg.feature_dim, cfg.center_separation, rng);
    for _ in 0..cfg.n_minority {
        let offset = random_center(cfg.feature_dim, cfg.minority_offset, rng);
        centers.push(anchor.iter().zip(&offset).map(|(a, o)| a + o).collect());
    }
    centers.push(vec![0.0; cfg.feature_dim]);
    let noise_of = |class: usize| {
        if class == background {
            cfg.noise_scale * cfg.background_spread
        } else {
            cfg.noise_scale
        }
    };

    // labeled pool: imbalanced foreground plus background proposals
    let mut labeled = Vec::new();
    for (class, center) in centers.iter().enumerate().take(n_fg) {
        let count = if class < cfg.n_majority {
            cfg.labeled_per_majority
        } else {
            cfg.labeled_per_minority
        };
        for _ in 0..count {
            labeled.push(LabeledExample {
                features: sample_point(center, cfg.noise_scale, rng),
                label: class,
            });
        }
    }
    for _ in 0..cfg.labeled_background {
        labeled.push(LabeledExample {
            features: sample_point(&centers[background], noise_of(background), rng),
            label: background,
        });
    }

    // unlabeled pool composition per scenario
    let fg_weights: Vec<f64> = match cfg.scenario {
        Scenario::Abundant => vec![1.0; n_fg],
        Scenario::Scarce => (0..n_fg)
            .map(|c| {
                if c < cfg.n_majority {
                    cfg.labeled_per_majority as f64
                } else {
                    cfg.labeled_per_minority as f64
                }
            })
            .collect(),
    };
    let fg_dist = WeightedIndex::new(&fg_weights)?;
    let mut unlabeled = Vec::with_capacity(cfg.unlabeled_images);
    for _ in 0..cfg.unlabeled_images {
        let mut features = Vec::with_capacity(cfg.proposals_per_image);
        let mut hidden = Vec::with_capacity(cfg.proposals_per_image);
        for _ in 0..cfg.proposals_per_image {
            let class = if rng.gen::<f64>() < cfg.background_fraction {
                background
            } else {
                fg_dist.sample(rng)
            };
            features.push(sample_point(&centers[class], noise_of(class), rng));
            hidden.push(class);
        }
        unlabeled.push(UnlabeledImage { features, hidden });
    }

    // balanced eval set over all classes including background
    let mut eval = Vec::with_capacity(dim * cfg.eval_per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..cfg.eval_per_class {
            eval.push(LabeledExample {
                features: sample_point(center, noise_of(class), rng),
                label: class,
            });
        }
    }

    Ok(SyntheticTask {
        centers,
        labeled,
        unlabeled,
        eval,
    })
}

/// Nearest-center classification, the independent oracle for separable specs.
pub fn classify_nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d: f64 = center
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}
