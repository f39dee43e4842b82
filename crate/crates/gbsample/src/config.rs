//! Run configuration for the simulation harness.
//!
//! The effective configuration is defaults, overlaid by an optional JSON
//! config file, overlaid by `key=value` overrides (dotted paths). Unknown
//! keys are rejected, and the resolved configuration is echoed into the run's
//! output directory so a run can be reproduced from its artifacts alone.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which of the two unlabeled-pool compositions to synthesize: minority
/// instances abundant in the unlabeled pool, or naturally scarce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Abundant,
    Scarce,
}

/// When pseudo labels are regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoRefresh {
    PerGeneration,
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub n_majority: usize,
    pub n_minority: usize,
    pub labeled_per_majority: usize,
    pub labeled_per_minority: usize,
    pub labeled_background: usize,
    pub unlabeled_images: usize,
    pub proposals_per_image: usize,
    pub background_fraction: f64,
    pub scenario: Scenario,
    pub feature_dim: usize,
    pub center_separation: f64,
    /// Distance from each minority-class center to the shared minority
    /// anchor; small offsets make the minority classes mutually confusable.
    pub minority_offset: f64,
    pub noise_scale: f64,
    /// Noise multiplier for the background cluster; clutter is more diffuse
    /// than any object class.
    pub background_spread: f64,
    pub eval_per_class: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            n_majority: 15,
            n_minority: 5,
            labeled_per_majority: 500,
            labeled_per_minority: 10,
            labeled_background: 2000,
            unlabeled_images: 2000,
            proposals_per_image: 8,
            background_fraction: 0.5,
            scenario: Scenario::Abundant,
            feature_dim: 16,
            center_separation: 4.0,
            minority_offset: 4.0,
            noise_scale: 1.0,
            background_spread: 1.0,
            eval_per_class: 50,
        }
    }
}

impl TaskConfig {
    pub fn n_foreground(&self) -> usize {
        self.n_majority + self.n_minority
    }

    /// Number of classes including background.
    pub fn dim(&self) -> usize {
        self.n_foreground() + 1
    }
}

/// Module toggles mirroring the ablation matrix: class-rebalancing sampling,
/// gradient-based thresholding, gradient-based reweighting, focal loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct Toggles {
    pub crs: bool,
    pub gbt: bool,
    pub gbr: bool,
    pub focal_loss: bool,
    /// Replace CrS's confidence-weighted rates with frequency-only repeat
    /// factors (a deliberately naive variant for comparison).
    pub naive_resampling: bool,
    /// Combine the gradient-derived thresholds with the rolling score
    /// quantile component.
    pub score_component: bool,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperConfig {
    pub theta_base: f64,
    pub gamma_focal: f64,
    pub beta: f64,
    pub lr_align: f64,
    pub eta_g: f64,
    pub eta_p: f64,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub generations: u32,
    pub steps_per_generation: u32,
    pub burn_in_steps: u32,
    pub labeled_images_per_batch: usize,
    pub unlabeled_images_per_batch: usize,
    pub threshold_refresh_interval: u32,
    pub crs_gamma: f64,
    pub rfs_tau: f64,
    pub pseudo_refresh: PseudoRefresh,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            theta_base: 0.9,
            gamma_focal: 2.0,
            beta: 0.5,
            lr_align: 0.01,
            eta_g: 0.9995,
            eta_p: 0.9995,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            generations: 10,
            steps_per_generation: 500,
            burn_in_steps: 2000,
            labeled_images_per_batch: 1,
            unlabeled_images_per_batch: 4,
            threshold_refresh_interval: 100,
            crs_gamma: 0.5,
            rfs_tau: 0.001,
            pseudo_refresh: PseudoRefresh::PerGeneration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub task: TaskConfig,
    pub toggles: Toggles,
    pub hyper: HyperConfig,
}

/// Named ablation presets (rows of the component-comparison matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Baseline,
    FocalOnly,
    Crs,
    Gbt,
    Gbr,
    GbtGbr,
    CrsGbr,
    CrsGbt,
    Full,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "baseline" => Preset::Baseline,
            "fl" => Preset::FocalOnly,
            "crs" => Preset::Crs,
            "gbt" => Preset::Gbt,
            "gbr" => Preset::Gbr,
            "gbt-gbr" => Preset::GbtGbr,
            "crs-gbr" => Preset::CrsGbr,
            "crs-gbt" => Preset::CrsGbt,
            "full" => Preset::Full,
            other => bail!(
                "unknown preset '{other}' (expected one of: baseline, fl, crs, gbt, gbr, \
                 gbt-gbr, crs-gbr, crs-gbt, full)"
            ),
        })
    }

    pub fn toggles(self) -> Toggles {
        let mut t = Toggles::default();
        match self {
            Preset::Baseline => {}
            Preset::FocalOnly => t.focal_loss = true,
            Preset::Crs => t.crs = true,
            Preset::Gbt => t.gbt = true,
            Preset::Gbr => t.gbr = true,
            Preset::GbtGbr => {
                t.gbt = true;
                t.gbr = true;
            }
            Preset::CrsGbr => {
                t.crs = true;
                t.gbr = true;
            }
            Preset::CrsGbt => {
                t.crs = true;
                t.gbt = true;
            }
            Preset::Full => {
                t.crs = true;
                t.gbt = true;
                t.gbr = true;
                t.focal_loss = true;
            }
        }
        t
    }
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: SimConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides addressed by dotted path, e.g.
    /// `hyper.generations=3` or `toggles.crs=true`.
    pub fn apply_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .with_context(|| format!("override '{item}' is not key=value"))?;
            let parsed: serde_json::Value = match serde_json::from_str(raw) {
                Ok(v) => v,
                Err(_) => serde_json::Value::String(raw.to_string()),
            };
            let parts: Vec<&str> = path.split('.').collect();
            let (last, parents) = parts.split_last().expect("split produces at least one part");
            let pointer: String = parents.iter().map(|p| format!("/{p}")).collect();
            let parent = value
                .pointer_mut(&pointer)
                .with_context(|| format!("unknown config key '{path}'"))?;
            let obj = parent
                .as_object_mut()
                .with_context(|| format!("override path '{path}' does not address a field"))?;
            if !obj.contains_key(*last) {
                bail!("unknown config key '{path}'");
            }
            obj.insert(last.to_string(), parsed);
        }
        let cfg: SimConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.n_foreground() == 0 {
            bail!("task must define at least one foreground class");
        }
        if self.task.feature_dim == 0 || self.task.proposals_per_image == 0 {
            bail!("feature_dim and proposals_per_image must be positive");
        }
        if self.task.unlabeled_images == 0 || self.task.eval_per_class == 0 {
            bail!("unlabeled_images and eval_per_class must be positive");
        }
        if !(0.0..=1.0).contains(&self.task.background_fraction) {
            bail!("background_fraction must be in [0, 1]");
        }
        if !(0.0 < self.hyper.theta_base && self.hyper.theta_base < 1.0) {
            bail!("theta_base must be in (0, 1)");
        }
        if self.hyper.generations == 0 || self.hyper.steps_per_generation == 0 {
            bail!("generations and steps_per_generation must be positive");
        }
        if self.hyper.threshold_refresh_interval == 0 {
            bail!("threshold_refresh_interval must be positive");
        }
        for (name, v) in [("eta_g", self.hyper.eta_g), ("eta_p", self.hyper.eta_p)] {
            if !(0.0..=1.0).contains(&v) {
                bail!("{name} must be in [0, 1]");
            }
        }
        Ok(())
    }
}
