//! Command-line entry point: run simulations, solve weight systems offline,
//! build benchmark splits and render report tables.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gbsample::config::{Preset, SimConfig};
use gbsample::harness::run_generations;
use gbsample::report;
use gbsample::split::{
    build_splits, lvis_split, write_splits, AnnotationIndex, RemapTable, SplitConfig,
};
use gbsample_core::matrix::SquareMatrix;
use gbsample_core::weights::{balance_residuals, jacobi_target, solve_direct, ClassWeights};

/// Environment variable naming the default root for output directories.
const OUT_ROOT_ENV: &str = "GBSAMPLE_OUT_ROOT";

#[derive(Parser)]
#[command(name = "gbsample", version, about = "Gradient-based sampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the teacher-student simulation and write its artifacts.
    Simulate(SimulateArgs),
    /// Solve a dumped gradient-matrix system for class weights.
    SolveWeights(SolveWeightsArgs),
    /// Build labeled/unlabeled benchmark splits from COCO annotations.
    Split(SplitArgs),
    /// Render CSV tables from a run's metrics stream.
    Report(ReportArgs),
    /// Print the default configuration as JSON (the accepted schema).
    ConfigSchema,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ThresholdMode {
    Fixed,
    Gbt,
    Score,
    Combined,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON config file; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ablation preset: baseline, fl, crs, gbt, gbr, gbt-gbr, crs-gbr,
    /// crs-gbt or full.
    #[arg(long)]
    preset: Option<String>,
    /// Dotted-path overrides, e.g. --set hyper.generations=3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Pseudo-label threshold strategy (overrides the config's toggles).
    #[arg(long, value_enum)]
    threshold_mode: Option<ThresholdMode>,
    #[arg(long)]
    theta_base: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (resolved under $GBSAMPLE_OUT_ROOT if relative).
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveMode {
    Direct,
    Iterative,
    Both,
}

#[derive(Args)]
struct SolveWeightsArgs {
    /// Text dump of the EMA gradient matrix (one whitespace-separated row
    /// per line).
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: SolveMode,
    #[arg(long, default_value_t = 10_000)]
    max_steps: u32,
    #[arg(long, default_value_t = 0.01)]
    lr_align: f64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Majority class ids: comma-separated list or a file of ids.
    #[arg(long)]
    majority: Option<String>,
    /// Minority class ids: comma-separated list or a file of ids.
    #[arg(long)]
    minority: Option<String>,
    #[arg(long, default_value_t = 0.10)]
    fraction: f64,
    #[arg(long, default_value_t = 10)]
    min_instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "splits")]
    out: PathBuf,
    /// Long-tail mode: fraction of all images plus one image per uncovered
    /// class; majority/minority lists are ignored.
    #[arg(long)]
    lvis_mode: bool,
    /// JSON class remap table: {"old_id": new_id_or_null, ...}
    #[arg(long)]
    remap: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics JSONL produced by `simulate`.
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::SolveWeights(args) => solve_weights(args),
        Command::Split(args) => split(args),
        Command::Report(args) => report_cmd(args),
        Command::ConfigSchema => {
            println!("{}", serde_json::to_string_pretty(&SimConfig::default())?);
            Ok(())
        }
    }
}

/// Resolves a relative output path under `$GBSAMPLE_OUT_ROOT` when set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    f.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))
}

fn effective_config(args: &SimulateArgs) -> Result<SimConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::default(),
    };
    if let Some(name) = &args.preset {
        cfg.toggles = Preset::parse(name)?.toggles();
    }
    cfg = cfg.apply_overrides(&args.overrides)?;
    if let Some(mode) = args.threshold_mode {
        cfg.toggles.gbt = matches!(mode, ThresholdMode::Gbt | ThresholdMode::Combined);
        cfg.toggles.score_component =
            matches!(mode, ThresholdMode::Score | ThresholdMode::Combined);
    }
    if let Some(theta) = args.theta_base {
        cfg.hyper.theta_base = theta;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = effective_config(&args)?;
    let out = resolve_out(&args.out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut config_json = serde_json::to_string_pretty(&cfg)?;
    config_json.push('\n');
    write_file(&out.join("effective_config.json"), config_json.as_bytes())?;

    let run = run_generations(&cfg)?;

    let mut jsonl = String::new();
    for rec in &run.records {
        jsonl.push_str(&serde_json::to_string(rec)?);
        jsonl.push('\n');
    }
    write_file(&out.join("metrics.jsonl"), jsonl.as_bytes())?;

    let mut summary = Vec::new();
    report::write_group_table(&run.records, &mut summary)?;
    write_file(&out.join("summary.csv"), &summary)?;

    let mut sampling = Vec::new();
    report::write_pr_table(&run.records, &mut sampling)?;
    write_file(&out.join("sampling_report.csv"), &sampling)?;

    let mut timeline = csv::Writer::from_writer(Vec::new());
    timeline.write_record(["generation", "class", "weight", "labeled_weight", "threshold"])?;
    for rec in &run.records {
        for c in 0..rec.weights.len() {
            timeline.write_record([
                rec.generation.to_string(),
                c.to_string(),
                rec.weights[c].to_string(),
                rec.labeled_weights[c].to_string(),
                rec.thresholds.get(c).map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    write_file(&out.join("weights_timeline.csv"), &timeline.into_inner()?)?;

    let last = run.records.last().expect("at least the burn-in record");
    println!(
        "generations: {}, final balanced accuracy: {:.4}, minority mean: {:.4}",
        last.generation, last.eval.balanced, last.eval.minority_mean
    );
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn solve_weights(args: SolveWeightsArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.matrix)
        .with_context(|| format!("reading {}", args.matrix.display()))?;
    let gt = SquareMatrix::from_text(&text).context("parsing gradient matrix")?;
    let dim = gt.dim();
    let zero_matrix = gt.data().iter().all(|v| *v == 0.0);

    let iterative = if args.mode != SolveMode::Direct {
        if zero_matrix {
            eprintln!(
                "warning: zero gradient matrix; iterative solution is the cold-start uniform weights"
            );
        }
        let mut cw = ClassWeights::new(dim, 0.5, args.lr_align)?;
        for _ in 0..args.max_steps {
            let target = jacobi_target(&gt, cw.weights())?;
            let loss = cw.align_step(&target)?;
            if loss < 1e-18 {
                break;
            }
        }
        Some(cw.weights().to_vec())
    } else {
        None
    };

    let direct = if args.mode != SolveMode::Iterative {
        Some(solve_direct(&gt).context("direct solve failed")?)
    } else {
        None
    };

    let res_of = |w: &Option<Vec<f64>>| -> Result<Option<Vec<f64>>> {
        w.as_ref()
            .map(|w| balance_residuals(&gt, w).map_err(Into::into))
            .transpose()
    };
    let res_iter = res_of(&iterative)?;
    let res_direct = res_of(&direct)?;

    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record([
        "class",
        "iterative",
        "residual_iterative",
        "direct",
        "residual_direct",
    ])?;
    // residual vectors cover foreground rows only; missing cells stay empty
    let cell = |v: &Option<Vec<f64>>, i: usize| {
        v.as_ref().and_then(|v| v.get(i)).map(|x| x.to_string()).unwrap_or_default()
    };
    for i in 0..dim {
        w.write_record([
            i.to_string(),
            cell(&iterative, i),
            cell(&res_iter, i),
            cell(&direct, i),
            cell(&res_direct, i),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a class list given either inline (comma-separated) or as a file of
/// whitespace/comma-separated ids.
fn parse_class_list(value: &str) -> Result<BTreeSet<u64>> {
    let text = if Path::new(value).is_file() {
        std::fs::read_to_string(value).with_context(|| format!("reading class list {value}"))?
    } else {
        value.to_string()
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().with_context(|| format!("bad class id '{s}'")))
        .collect()
}

fn split(args: SplitArgs) -> Result<()> {
    let remap: RemapTable = match &args.remap {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading remap {}", path.display()))?;
            let raw: std::collections::BTreeMap<String, Option<u64>> =
                serde_json::from_str(&text).context("parsing remap table")?;
            raw.into_iter()
                .map(|(k, v)| Ok((k.parse::<u64>().context("remap key must be a class id")?, v)))
                .collect::<Result<_>>()?
        }
        None => RemapTable::new(),
    };
    let index = AnnotationIndex::load(&args.annotations, &remap)?;

    let parse_opt = |v: &Option<String>| -> Result<BTreeSet<u64>> {
        v.as_deref().map(parse_class_list).transpose().map(Option::unwrap_or_default)
    };
    let mut cfg = SplitConfig::new(parse_opt(&args.majority)?, parse_opt(&args.minority)?, args.seed);
    cfg.fraction = args.fraction;
    cfg.min_instances = args.min_instances;
    cfg.remap = remap;

    let splits = if args.lvis_mode {
        lvis_split(&index, &cfg)?
    } else {
        if cfg.majority.is_empty() {
            bail!("--majority is required unless --lvis-mode is set");
        }
        build_splits(&index, &cfg)?
    };
    let out = resolve_out(&args.out);
    write_splits(&index, &splits, &out)?;
    println!(
        "labeled images: {}, unlabeled images: {}, written to {}",
        splits.labeled.len(),
        splits.unlabeled.len(),
        out.display()
    );
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let file = std::fs::File::open(&args.metrics)
        .with_context(|| format!("opening {}", args.metrics.display()))?;
    let records = report::read_metrics(std::io::BufReader::new(file))?;
    let out = resolve_out(&args.out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut pr = Vec::new();
    report::write_pr_table(&records, &mut pr)?;
    write_file(&out.join("pseudo_label_pr.csv"), &pr)?;
    let mut groups = Vec::new();
    report::write_group_table(&records, &mut groups)?;
    write_file(&out.join("accuracy_by_group.csv"), &groups)?;
    println!("{} generation records -> {}", records.len(), out.display());
    Ok(())
}
