//! Command-line pipeline: simulate, estimate, evaluate, sweep.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use quadfuse::config::{apply_override, ConfigError, RunConfig};
use quadfuse::eval::{compare_variants, rpe, write_gnuplot, write_report_csv, Component, RpeReport, Trajectory, RPE_INTERVALS};
use quadfuse::io::{read_manifest, write_manifest, Manifest};
use quadfuse::pipeline::{run_variant, write_estimate, write_run_dir, RunStreams, Variant};
use quadfuse::sim::simulate;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "quadfuse",
    about = "Quadruped base state estimation: simulate sensor logs, run estimator variants, evaluate trajectory accuracy",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate ground truth and sensor CSVs for one scenario and seed.
    Simulate(SimulateArgs),
    /// Run estimator variants over a simulated (or recorded) run directory.
    Estimate(EstimateArgs),
    /// Compute RPE reports and the variant comparison table for a run.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline over a parameter grid and aggregate mean RPE.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output run directory (created).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Run directory produced by `simulate` (or external logs in the same
    /// schema plus a config.toml).
    #[arg(long)]
    run: PathBuf,
    /// Variants to run (comma separated); defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    /// Variants to evaluate (comma separated); defaults to those with
    /// estimate files present.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    /// Start-index stride for the interval sweep (1 = dense).
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Grid axis `key=v1,v2,...`; repeat for a cartesian product.
    /// `contact.n=3,20` moves both gating counts together.
    #[arg(long)]
    grid: Vec<String>,
    /// Seeds (comma separated); defaults to the scenario's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    stride: usize,
}

/// Errors that are the caller's fault exit with 2; runtime failures with 1.
enum AppError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Usage(e.to_string())
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Estimate(args) => cmd_estimate(&args),
        Cmd::Evaluate(args) => cmd_evaluate(&args),
        Cmd::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(path: &Path) -> Result<RunConfig, AppError> {
    if !path.exists() {
        return Err(AppError::Usage(format!(
            "scenario file {} does not exist",
            path.display()
        )));
    }
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate_into(
    cfg: &RunConfig,
    scenario_name: &str,
    seed: u64,
    dir: &Path,
) -> Result<(), AppError> {
    let out = simulate(
        &cfg.gait,
        &cfg.robot.to_model(),
        &cfg.sim,
        &cfg.sensors,
        &cfg.rates,
        seed,
    )
    .map_err(|e| AppError::Usage(format!("scenario invalid: {e}")))?;
    write_run_dir(dir, &out).context("writing run csvs").map_err(AppError::Runtime)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string())
        .context("writing config.toml")
        .map_err(AppError::Runtime)?;
    write_manifest(
        &dir.join("manifest.json"),
        &Manifest {
            scenario: scenario_name.to_string(),
            seed,
            config_sha256: cfg.sha256(),
            duration_s: cfg.total_duration(),
        },
    )
    .context("writing manifest")
    .map_err(|e| AppError::Runtime(e))?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), AppError> {
    let cfg = load_scenario(&args.scenario)?;
    simulate_into(
        &cfg,
        &args.scenario.display().to_string(),
        args.seed,
        &args.out,
    )?;
    println!(
        "simulated {} ({} s, seed {}) -> {}",
        args.scenario.display(),
        cfg.total_duration(),
        args.seed,
        args.out.display()
    );
    Ok(())
}

/// Config of a run directory: config.toml written by simulate, or defaults
/// for external logs.
fn run_dir_config(dir: &Path) -> Result<RunConfig, AppError> {
    let path = dir.join("config.toml");
    if path.exists() {
        let cfg = RunConfig::load(&path)?;
        cfg.validate()?;
        Ok(cfg)
    } else {
        eprintln!(
            "note: {} has no config.toml, using default estimator parameters",
            dir.display()
        );
        Ok(RunConfig::default())
    }
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>, AppError> {
    names
        .iter()
        .map(|n| Variant::parse(n).map_err(|e| AppError::Usage(e.to_string())))
        .collect()
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), AppError> {
    if !args.run.exists() {
        return Err(AppError::Usage(format!(
            "run directory {} does not exist",
            args.run.display()
        )));
    }
    let cfg = run_dir_config(&args.run)?;
    let variants = if args.variant.is_empty() {
        cfg.variants()
    } else {
        parse_variants(&args.variant)?
    };
    let streams = RunStreams::load(&args.run)
        .context("loading run streams")
        .map_err(AppError::Runtime)?;
    let est_cfg = cfg.estimate_config();
    for variant in variants {
        let output = run_variant(&streams, &est_cfg, variant)
            .with_context(|| format!("estimating {variant}"))
            .map_err(AppError::Runtime)?;
        write_estimate(&args.run, variant, &output)
            .context("writing estimate")
            .map_err(AppError::Runtime)?;
        println!("estimated {variant} -> est_{variant}.csv");
    }
    Ok(())
}

fn evaluate_run(
    dir: &Path,
    variants: &[Variant],
    stride: usize,
) -> Result<Vec<(String, RpeReport)>, AppError> {
    let truth = quadfuse::io::read_truth_csv(&dir.join("truth.csv"))
        .context("reading truth.csv")
        .map_err(AppError::Runtime)?;
    let gt = Trajectory::new(truth);
    let mut reports = Vec::new();
    for variant in variants {
        let est_path = dir.join(format!("est_{variant}.csv"));
        if !est_path.exists() {
            return Err(AppError::Usage(format!(
                "missing {} (run `estimate` first)",
                est_path.display()
            )));
        }
        let est = Trajectory::new(
            quadfuse::io::read_truth_csv(&est_path)
                .context("reading estimate")
                .map_err(AppError::Runtime)?,
        );
        let report = rpe(&est, &gt, &RPE_INTERVALS, stride)
            .with_context(|| format!("rpe for {variant}"))
            .map_err(AppError::Runtime)?;
        write_report_csv(&dir.join(format!("rpe_{variant}.csv")), variant.name(), &report)
            .context("writing report")
            .map_err(AppError::Runtime)?;
        reports.push((variant.name().to_string(), report));
    }
    Ok(reports)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), AppError> {
    if !args.run.exists() {
        return Err(AppError::Usage(format!(
            "run directory {} does not exist",
            args.run.display()
        )));
    }
    let variants = if args.variants.is_empty() {
        // default: every variant with an estimate file present, table order
        Variant::ALL
            .into_iter()
            .filter(|v| args.run.join(format!("est_{v}.csv")).exists())
            .collect()
    } else {
        parse_variants(&args.variants)?
    };
    if variants.is_empty() {
        return Err(AppError::Usage(
            "no estimates found in the run directory; run `estimate` first".into(),
        ));
    }
    let reports = evaluate_run(&args.run, &variants, args.stride)?;
    let table = compare_variants(&reports);
    table
        .write_csv(&args.run.join("comparison.csv"))
        .context("writing comparison")
        .map_err(AppError::Runtime)?;
    let text = table.render_text();
    std::fs::write(args.run.join("comparison.txt"), &text)
        .context("writing comparison.txt")
        .map_err(AppError::Runtime)?;
    write_gnuplot(&args.run.join("plots"), &reports)
        .context("writing plot data")
        .map_err(AppError::Runtime)?;
    if let Ok(manifest) = read_manifest(&args.run.join("manifest.json")) {
        println!(
            "run {} (seed {}, {} s)",
            manifest.scenario, manifest.seed, manifest.duration_s
        );
    }
    print!("{text}");
    Ok(())
}

fn parse_grid(raw: &[String]) -> Result<Vec<(String, Vec<String>)>, AppError> {
    if raw.is_empty() {
        return Err(AppError::Usage(
            "sweep needs at least one --grid key=v1,v2 axis".into(),
        ));
    }
    let mut axes = Vec::new();
    for axis in raw {
        let (key, values) = axis.split_once('=').ok_or_else(|| {
            AppError::Usage(format!("grid axis {axis:?} must look like key=v1,v2"))
        })?;
        let values: Vec<String> = values.split(',').map(|s| s.trim().to_string()).collect();
        if values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(AppError::Usage(format!("grid axis {axis:?} has empty values")));
        }
        axes.push((key.trim().to_string(), values));
    }
    Ok(axes)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), AppError> {
    let base = load_scenario(&args.scenario)?;
    let axes = parse_grid(&args.grid)?;
    let seeds = if args.seeds.is_empty() {
        base.run.seeds.clone()
    } else {
        args.seeds.clone()
    };

    // cartesian product of the axes
    let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        let mut next = Vec::new();
        for point in &points {
            for value in values {
                let mut p = point.clone();
                p.push((key.clone(), value.clone()));
                next.push(p);
            }
        }
        points = next;
    }

    std::fs::create_dir_all(&args.out)
        .context("creating sweep dir")
        .map_err(AppError::Runtime)?;
    let variants = base.variants();
    // aggregated rows: grid point, variant, component, per-seed means, mean
    let mut agg: Vec<(String, String, Component, Vec<f64>)> = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let mut cfg = base.clone();
        for (key, value) in point {
            apply_override(&mut cfg, key, value)?;
        }
        cfg.validate()?;
        let label: String = point
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",");
        let mut per_variant: Vec<Vec<[f64; 4]>> = vec![Vec::new(); variants.len()];
        for &seed in &seeds {
            let dir = args.out.join(format!("grid{pi}_seed{seed}"));
            simulate_into(&cfg, &args.scenario.display().to_string(), seed, &dir)?;
            let streams = RunStreams::load(&dir)
                .context("loading streams")
                .map_err(AppError::Runtime)?;
            let est_cfg = cfg.estimate_config();
            for (vi, &variant) in variants.iter().enumerate() {
                let output = run_variant(&streams, &est_cfg, variant)
                    .with_context(|| format!("estimating {variant}"))
                    .map_err(AppError::Runtime)?;
                write_estimate(&dir, variant, &output)
                    .context("writing estimate")
                    .map_err(AppError::Runtime)?;
                let report = rpe(
                    &output.trajectory(),
                    &Trajectory::new(streams.truth.clone()),
                    &RPE_INTERVALS,
                    args.stride,
                )
                .context("rpe")
                .map_err(AppError::Runtime)?;
                per_variant[vi].push([
                    report.pooled(Component::Xy).mean,
                    report.pooled(Component::Z).mean,
                    report.pooled(Component::Yaw).mean,
                    report.pooled(Component::Gravity).mean,
                ]);
            }
        }
        for (vi, variant) in variants.iter().enumerate() {
            for (ci, c) in Component::ALL.into_iter().enumerate() {
                let per_seed: Vec<f64> = per_variant[vi].iter().map(|row| row[ci]).collect();
                agg.push((label.clone(), variant.name().to_string(), c, per_seed));
            }
        }
    }

    // write sweep.csv with per-seed columns plus the aggregate
    let mut csv = String::from("grid_point,variant,component,unit");
    for seed in &seeds {
        let _ = write!(csv, ",seed{seed}");
    }
    csv.push_str(",mean\n");
    let mut text_rows = Vec::new();
    for (label, variant, c, per_seed) in &agg {
        let mean: f64 = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let mut row = format!("{label},{variant},{},{}", c.label(), c.unit());
        for v in per_seed {
            let _ = write!(row, ",{v}");
        }
        let _ = writeln!(csv, "{row},{mean}");
        text_rows.push(format!(
            "{label:<28} {variant:<10} {:>8} {mean:>10.4} {}",
            c.label(),
            c.unit()
        ));
    }
    std::fs::write(args.out.join("sweep.csv"), &csv)
        .context("writing sweep.csv")
        .map_err(AppError::Runtime)?;
    println!("{:<28} {:<10} {:>8} {:>10}", "grid point", "variant", "comp", "mean");
    for row in text_rows {
        println!("{row}");
    }
    println!("wrote {}", args.out.join("sweep.csv").display());
    Ok(())
}
