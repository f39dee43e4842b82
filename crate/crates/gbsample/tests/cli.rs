//! End-to-end tests of the `gbsample` binary: artifact determinism, exit
//! codes, and round trips between subcommands.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gbsample"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawning gbsample");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small-but-complete simulation arguments shared by the CLI tests.
fn tiny_sim_args(out_dir: &Path) -> Vec<String> {
    let sets = [
        "task.n_majority=3",
        "task.n_minority=2",
        "task.labeled_per_majority=40",
        "task.labeled_per_minority=5",
        "task.labeled_background=40",
        "task.unlabeled_images=40",
        "task.eval_per_class=10",
        "task.feature_dim=4",
        "hyper.generations=2",
        "hyper.steps_per_generation=25",
        "hyper.burn_in_steps=25",
    ];
    let mut args = vec![
        "simulate".to_string(),
        "--preset".into(),
        "full".into(),
        "--seed".into(),
        "7".into(),
        "--out".into(),
        out_dir.display().to_string(),
    ];
    for s in sets {
        args.push("--set".into());
        args.push(s.into());
    }
    args
}

#[test]
fn simulate_writes_deterministic_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(bin().args(tiny_sim_args(&a)));
    run_ok(bin().args(tiny_sim_args(&b)));

    let names = [
        "effective_config.json",
        "metrics.jsonl",
        "summary.csv",
        "sampling_report.csv",
        "weights_timeline.csv",
    ];
    for name in names {
        let left = fs::read(a.join(name)).unwrap_or_else(|_| panic!("missing {name}"));
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
        assert!(!left.is_empty(), "{name} is empty");
    }
}

#[test]
fn report_round_trips_simulate_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    run_ok(bin().args(tiny_sim_args(&run_dir)));

    let report_dir = tmp.path().join("report");
    run_ok(bin().args([
        "report",
        "--metrics",
        &run_dir.join("metrics.jsonl").display().to_string(),
        "--out",
        &report_dir.display().to_string(),
    ]));

    // the report's group table is rebuilt from the same records the run wrote
    let rebuilt = fs::read(report_dir.join("accuracy_by_group.csv")).unwrap();
    let original = fs::read(run_dir.join("summary.csv")).unwrap();
    assert_eq!(rebuilt, original);
    assert!(report_dir.join("pseudo_label_pr.csv").is_file());
}

#[test]
fn report_fails_cleanly_on_missing_and_malformed_input() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = bin()
        .args(["report", "--metrics", "/nonexistent/metrics.jsonl"])
        .output()
        .unwrap();
    assert!(!missing.status.success());

    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    let malformed = bin()
        .args([
            "report",
            "--metrics",
            &bad.display().to_string(),
            "--out",
            &tmp.path().join("r").display().to_string(),
        ])
        .output()
        .unwrap();
    assert!(!malformed.status.success());
}

#[test]
fn config_schema_parses_back_and_unknown_preset_is_rejected() {
    let out = run_ok(bin().arg("config-schema"));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(parsed.get("task").is_some() && parsed.get("hyper").is_some());

    let bad = bin()
        .args(["simulate", "--preset", "nonsense"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown preset"));
}

#[test]
fn solve_weights_modes_agree_on_a_dominant_system() {
    let tmp = tempfile::tempdir().unwrap();
    let matrix = tmp.path().join("gt.txt");
    // diagonally dominant 3x3 balance system (2 foreground classes + background)
    fs::write(&matrix, "-2.0 0.3 0.2\n0.2 -1.5 0.1\n0.1 0.2 -1.8\n").unwrap();

    let out = run_ok(bin().args([
        "solve-weights",
        "--matrix",
        &matrix.display().to_string(),
        "--mode",
        "both",
    ]));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines();
    assert_eq!(
        rows.next().unwrap(),
        "class,iterative,residual_iterative,direct,residual_direct"
    );
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let iterative: f64 = cells[1].parse().unwrap();
        let direct: f64 = cells[3].parse().unwrap();
        assert!(
            (iterative - direct).abs() <= 1e-3 * direct.abs().max(1.0),
            "row {row}: iterative and direct disagree"
        );
    }
}

#[test]
fn solve_weights_zero_matrix_warns_iteratively_and_fails_directly() {
    let tmp = tempfile::tempdir().unwrap();
    let matrix = tmp.path().join("zero.txt");
    fs::write(&matrix, "0 0\n0 0\n").unwrap();

    let iterative = bin()
        .args([
            "solve-weights",
            "--matrix",
            &matrix.display().to_string(),
            "--mode",
            "iterative",
        ])
        .output()
        .unwrap();
    assert!(iterative.status.success());
    assert!(String::from_utf8_lossy(&iterative.stderr).contains("warning"));
    // cold-start uniform weights: every class weight is 1
    for row in String::from_utf8_lossy(&iterative.stdout).lines().skip(1) {
        let w: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }

    let direct = bin()
        .args([
            "solve-weights",
            "--matrix",
            &matrix.display().to_string(),
            "--mode",
            "direct",
        ])
        .output()
        .unwrap();
    assert!(!direct.status.success());
}

#[test]
fn split_round_trip_from_coco_file() {
    let tmp = tempfile::tempdir().unwrap();
    let annotations = tmp.path().join("train.json");
    let dataset = serde_json::json!({
        "images": (0..40u64)
            .map(|id| serde_json::json!({"id": id, "file_name": format!("{id:04}.jpg")}))
            .collect::<Vec<_>>(),
        "annotations": (0..40u64)
            .map(|id| serde_json::json!({
                "id": id,
                "image_id": id,
                "category_id": if id < 30 { 1u64 } else { 2 },
                "bbox": [0.0, 0.0, 8.0, 8.0],
            }))
            .collect::<Vec<_>>(),
        "categories": [
            {"id": 1, "name": "common"},
            {"id": 2, "name": "rare"},
        ],
    });
    fs::write(&annotations, serde_json::to_vec(&dataset).unwrap()).unwrap();

    let out_dir = tmp.path().join("splits");
    run_ok(bin().args([
        "split",
        "--annotations",
        &annotations.display().to_string(),
        "--majority",
        "1",
        "--minority",
        "2",
        "--fraction",
        "0.2",
        "--min-instances",
        "5",
        "--out",
        &out_dir.display().to_string(),
    ]));

    let labeled: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("labeled.json")).unwrap()).unwrap();
    let unlabeled: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("unlabeled.json")).unwrap()).unwrap();
    let n_labeled = labeled["images"].as_array().unwrap().len();
    let n_unlabeled = unlabeled.as_array().unwrap().len();
    assert_eq!(n_labeled + n_unlabeled, 40, "splits must partition the corpus");
    // ceil(0.2 * 30) majority images plus at least 5 rare instances
    assert!(n_labeled >= 6 + 5);
    assert!(out_dir.join("audit.csv").is_file());

    // unlabeled side must not leak annotations
    let text = fs::read_to_string(out_dir.join("unlabeled.json")).unwrap();
    assert!(!text.contains("category_id") && !text.contains("bbox"));
}
