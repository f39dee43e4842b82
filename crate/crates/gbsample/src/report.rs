//! Post-hoc report tables from a run's metrics stream.
//!
//! A run writes one JSON object per generation to `metrics.jsonl`. This
//! module re-reads that stream and renders two CSV tables: per-class
//! pseudo-label precision/recall over time, and eval accuracy by class group.
//! Empty input produces empty (header-only) tables rather than an error.

use anyhow::{Context, Result};
use std::io::{BufRead, Write};

use crate::harness::GenerationRecord;

/// Parses a metrics JSONL stream, one [`GenerationRecord`] per line.
/// Blank lines are ignored; malformed lines are errors.
pub fn read_metrics(reader: impl BufRead) -> Result<Vec<GenerationRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.context("reading metrics stream")?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GenerationRecord = serde_json::from_str(&line)
            .with_context(|| format!("metrics line {}", lineno + 1))?;
        records.push(rec);
    }
    Ok(records)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-class pseudo-label precision/recall table: one row per
/// (generation, class). Undefined values render as empty cells.
pub fn write_pr_table(records: &[GenerationRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "class",
        "precision",
        "recall",
        "threshold",
        "repeat_rate",
        "image_count",
    ])?;
    for rec in records {
        for c in 0..rec.precision.len() {
            w.write_record([
                rec.generation.to_string(),
                c.to_string(),
                fmt_opt(rec.precision[c]),
                fmt_opt(rec.recall[c]),
                rec.thresholds[c].to_string(),
                rec.class_repeat_rates[c].to_string(),
                rec.class_image_counts[c].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Eval accuracy by group: one row per generation with overall, balanced,
/// majority-mean and minority-mean accuracy plus the pseudo-label volume.
pub fn write_group_table(records: &[GenerationRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "generation",
        "overall_acc",
        "balanced_acc",
        "majority_acc",
        "minority_acc",
        "pseudo_count",
        "epsilon",
        "mean_loss",
    ])?;
    for rec in records {
        w.write_record([
            rec.generation.to_string(),
            rec.eval.overall.to_string(),
            rec.eval.balanced.to_string(),
            rec.eval.majority_mean.to_string(),
            rec.eval.minority_mean.to_string(),
            rec.pseudo_count.to_string(),
            rec.epsilon.to_string(),
            rec.mean_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
