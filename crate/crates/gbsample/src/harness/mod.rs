//! Desk-scale teacher-student training harness wiring the gradient ledger,
//! weight solver, thresholds and rebalancing sampler into a generation-based
//! semi-supervised loop over synthetic long-tailed proposal data.

pub mod baseline;
pub mod metrics;
pub mod model;
pub mod step;
pub mod synth;
pub mod train;

use serde::{Deserialize, Serialize};

pub use baseline::run_fixed_threshold_reference;
pub use metrics::{eval_balanced_accuracy, pseudo_label_pr, EvalMetrics};
pub use model::{LinearClassifier, TeacherState};
pub use step::{generate_pseudo_labels, student_step, teacher_predictions, BatchProposal};
pub use synth::{classify_nearest, generate_task, LabeledExample, SyntheticTask, UnlabeledImage};
pub use train::run_generations;

/// A kept teacher prediction on one proposal of an unlabeled image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub proposal: usize,
    pub class: usize,
    pub score: f64,
}

/// Pseudo labels per unlabeled image, indexed like the unlabeled pool.
pub type PseudoLabelSet = Vec<Vec<PseudoLabel>>;

/// Everything recorded about one generation of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub epsilon: f64,
    pub pseudo_count: usize,
    /// Per-foreground-class pseudo-label precision; `null` when undefined.
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub weights: Vec<f64>,
    pub labeled_weights: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub class_image_counts: Vec<u64>,
    pub class_repeat_rates: Vec<f64>,
    pub mean_loss: f64,
    pub eval: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub records: Vec<GenerationRecord>,
}
