//! Per-class pseudo-label score thresholds.
//!
//! The gradient-derived component is `theta_p_i = min(theta, theta / w_i)`:
//! classes with large balancing weights (minority classes) get lower
//! thresholds and therefore harvest more pseudo labels. An optional
//! score-statistics component (a rolling per-class quantile) can be combined
//! by elementwise minimum.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Floor on every threshold; `theta / w_i` is unbounded below for large weights.
pub const THETA_MIN: f64 = 0.05;

pub const DEFAULT_THETA_BASE: f64 = 0.9;

/// `theta_p_i = min(theta_base, theta_base / w_i)`, floored at [`THETA_MIN`].
pub fn gbt_thresholds(foreground_weights: &[f64], theta_base: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&theta_base) || theta_base == 0.0 {
        return Err(Error::InvalidInput(alloc::format!(
            "theta_base must be in (0, 1), got {theta_base}"
        )));
    }
    foreground_weights
        .iter()
        .map(|w| {
            if *w <= 0.0 || !w.is_finite() {
                return Err(Error::InvalidInput(alloc::format!(
                    "class weight must be positive, got {w}"
                )));
            }
            Ok(theta_base.min(theta_base / w).max(THETA_MIN))
        })
        .collect()
}

/// Elementwise minimum of the two threshold components.
pub fn combine(theta_p: &[f64], theta_c: &[f64]) -> Result<Vec<f64>> {
    if theta_p.len() != theta_c.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_p.len(),
            got: theta_c.len(),
        });
    }
    Ok(theta_p
        .iter()
        .zip(theta_c)
        .map(|(p, c)| p.min(*c))
        .collect())
}

/// Immutable per-class threshold snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    theta_base: f64,
    theta_p: Vec<f64>,
    theta_c: Option<Vec<f64>>,
    theta: Vec<f64>,
}

impl ThresholdTable {
    /// All classes at the fixed base threshold (the baseline strategy).
    pub fn fixed(n_foreground: usize, theta_base: f64) -> Result<Self> {
        let theta_p = vec![theta_base; n_foreground];
        Self::new(theta_base, theta_p, None)
    }

    /// Gradient-derived thresholds from the solved foreground weights.
    pub fn from_weights(foreground_weights: &[f64], theta_base: f64) -> Result<Self> {
        let theta_p = gbt_thresholds(foreground_weights, theta_base)?;
        Self::new(theta_base, theta_p, None)
    }

    pub fn new(theta_base: f64, theta_p: Vec<f64>, theta_c: Option<Vec<f64>>) -> Result<Self> {
        let theta = match &theta_c {
            Some(c) => combine(&theta_p, c)?,
            None => theta_p.clone(),
        };
        if theta.iter().any(|t| *t <= 0.0 || *t > 1.0) {
            return Err(Error::InvalidInput(
                "thresholds must lie in (0, 1]".into(),
            ));
        }
        Ok(Self {
            theta_base,
            theta_p,
            theta_c,
            theta,
        })
    }

    pub fn with_score_component(&self, theta_c: Vec<f64>) -> Result<Self> {
        Self::new(self.theta_base, self.theta_p.clone(), Some(theta_c))
    }

    pub fn theta_base(&self) -> f64 {
        self.theta_base
    }

    pub fn theta_p(&self) -> &[f64] {
        &self.theta_p
    }

    pub fn theta_c(&self) -> Option<&[f64]> {
        self.theta_c.as_deref()
    }

    /// Final per-class thresholds.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_foreground(&self) -> usize {
        self.theta.len()
    }

    pub fn threshold_for(&self, class: usize) -> Result<f64> {
        self.theta.get(class).copied().ok_or(Error::LabelOutOfRange {
            label: class,
            dim: self.theta.len(),
        })
    }
}

/// A teacher prediction for one proposal: argmax foreground class, its
/// softmax score and the box payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub score: f64,
    pub bbox: [f64; 4],
}

/// Keeps exactly the predictions with `score >= theta_class` (inclusive).
/// `predictions` must already exclude background (background never becomes a
/// pseudo label).
pub fn filter_pseudo_labels(
    predictions: &[Prediction],
    table: &ThresholdTable,
) -> Result<Vec<Prediction>> {
    let mut kept = Vec::new();
    for p in predictions {
        let theta = table.threshold_for(p.class)?;
        if p.score >= theta {
            kept.push(*p);
        }
    }
    Ok(kept)
}

/// Rolling per-class score history backing the score-statistics threshold
/// component. A documented stand-in: each class's threshold is the
/// `quantile`-quantile of its recent teacher max-scores, clamped to
/// `[THETA_MIN, theta_base]`; classes with fewer than `min_samples`
/// observations fall back to `theta_base`.
#[derive(Debug, Clone)]
pub struct ScoreHistory {
    window: usize,
    quantile: f64,
    min_samples: usize,
    theta_base: f64,
    scores: Vec<VecDeque<f64>>,
}

pub const DEFAULT_SCORE_WINDOW: usize = 10_000;
pub const DEFAULT_SCORE_QUANTILE: f64 = 0.95;
pub const DEFAULT_SCORE_MIN_SAMPLES: usize = 20;

impl ScoreHistory {
    pub fn new(
        n_foreground: usize,
        window: usize,
        quantile: f64,
        min_samples: usize,
        theta_base: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&quantile) {
            return Err(Error::InvalidInput(alloc::format!(
                "quantile must be in [0, 1], got {quantile}"
            )));
        }
        if window == 0 {
            return Err(Error::InvalidInput("window must be positive".into()));
        }
        Ok(Self {
            window,
            quantile,
            min_samples,
            theta_base,
            scores: vec![VecDeque::new(); n_foreground],
        })
    }

    pub fn with_defaults(n_foreground: usize, theta_base: f64) -> Result<Self> {
        Self::new(
            n_foreground,
            DEFAULT_SCORE_WINDOW,
            DEFAULT_SCORE_QUANTILE,
            DEFAULT_SCORE_MIN_SAMPLES,
            theta_base,
        )
    }

    pub fn record(&mut self, class: usize, score: f64) -> Result<()> {
        let buf = self
            .scores
            .get_mut(class)
            .ok_or(Error::LabelOutOfRange {
                label: class,
                dim: 0,
            })?;
        if buf.len() == self.window {
            buf.pop_front();
        }
        buf.push_back(score);
        Ok(())
    }

    /// Per-class quantile thresholds from the current history.
    pub fn score_thresholds(&self) -> Vec<f64> {
        self.scores
            .iter()
            .map(|buf| {
                if buf.len() < self.min_samples.max(1) {
                    return self.theta_base;
                }
                let mut sorted: Vec<f64> = buf.iter().copied().collect();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                // nearest-rank quantile
                let rank = (libm::ceil(self.quantile * sorted.len() as f64) as usize)
                    .clamp(1, sorted.len());
                sorted[rank - 1].clamp(THETA_MIN, self.theta_base)
            })
            .collect()
    }
}
