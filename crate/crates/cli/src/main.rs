//! Batch driver: sweeps, map building and map inspection.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use ckmsched::ckm::UsCkm;
use ckmsched::config::{parse_algorithms, ExperimentPlan};
use ckmsched::experiment::{result_record, run_trial, Environment, EnvironmentCache, TrialOptions, RESULT_HEADER};
use ckmsched::geometry::ScenarioConfig;
use ckmsched::sched::Algorithm;

#[derive(Parser)]
#[command(
    name = "ckmsched",
    version,
    about = "Map-driven coordinated uplink user scheduling experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, sweep point, trial) cell and write the results CSV.
    Run(CommonArgs),
    /// Build the channel knowledge map of the base scenario and save it.
    BuildCkm(CommonArgs),
    /// Summarize a saved map.
    InspectCkm(InspectArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Plan file with `key = value` lines; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file. `run` falls back to the plan's `output` key, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; trial `t` uses `seed + t`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Comma-separated algorithm names, or `all`.
    #[arg(long)]
    algorithms: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Saved map file.
    path: PathBuf,
    /// Re-threshold with this reliability bound before reporting.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::BuildCkm(a) => cmd_build_ckm(&a).map(|()| true),
        Command::InspectCkm(a) => cmd_inspect_ckm(&a).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn load_plan(args: &CommonArgs) -> anyhow::Result<ExperimentPlan> {
    let mut plan = match &args.config {
        Some(p) => ExperimentPlan::from_file(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if let Some(algs) = &args.algorithms {
        plan.algorithms = parse_algorithms(algs).map_err(anyhow::Error::msg)?;
    }
    if args.out.is_some() {
        plan.output = args.out.clone();
    }
    plan.validate()?;
    Ok(plan)
}

fn create(path: &Path) -> anyhow::Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

struct Cell {
    point: usize,
    algorithm: Algorithm,
    seed: u64,
}

/// Returns `Ok(false)` when at least one trial failed; the successful rows
/// are written regardless.
fn cmd_run(args: &CommonArgs) -> anyhow::Result<bool> {
    init_threads(args.threads)?;
    let plan = load_plan(args)?;
    let points = plan.points();

    let mut cache = EnvironmentCache::default();
    let envs: Vec<Result<Environment, String>> = points
        .iter()
        .map(|p| cache.environment(p).map_err(|e| e.to_string()))
        .collect();

    let seeds: Vec<u64> = plan.trial_seeds().collect();
    let mut cells = Vec::with_capacity(plan.row_count());
    for point in 0..points.len() {
        for &algorithm in &plan.algorithms {
            cells.extend(seeds.iter().map(|&seed| Cell { point, algorithm, seed }));
        }
    }

    let opts = TrialOptions {
        timing: plan.timing,
        enumeration_limit: plan.enumeration_limit,
    };
    let outcomes: Vec<Result<_, String>> = cells
        .par_iter()
        .map(|c| {
            let env = envs[c.point].as_ref().map_err(Clone::clone)?;
            run_trial(env, c.algorithm, c.seed, &opts).map_err(|e| e.to_string())
        })
        .collect();

    let sink: Box<dyn Write> = match &plan.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut writer = csv::Writer::from_writer(BufWriter::new(sink));
    writer.write_record(RESULT_HEADER)?;

    let mut failures = 0usize;
    let mut summary: Vec<(Algorithm, f64, usize)> = plan.algorithms.iter().map(|&a| (a, 0.0, 0)).collect();
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        match outcome {
            Ok(r) => {
                writer.write_record(result_record(&points[cell.point], r))?;
                if let Some(s) = summary.iter_mut().find(|s| s.0 == cell.algorithm) {
                    s.1 += r.sum_rate;
                    s.2 += 1;
                }
            }
            Err(e) => {
                failures += 1;
                eprintln!(
                    "trial failed: {} point {} seed {}: {e}",
                    cell.algorithm, cell.point, cell.seed
                );
            }
        }
    }
    writer.flush()?;
    drop(writer);

    print_summary(&summary, cells.len(), failures);
    Ok(failures == 0)
}

fn print_summary(summary: &[(Algorithm, f64, usize)], total: usize, failures: usize) {
    let mut err = io::stderr().lock();
    let _ = writeln!(err, "{:<16} {:>8} {:>14}", "algorithm", "trials", "mean_sum_rate");
    for (alg, sum, n) in summary {
        let mean = if *n > 0 {
            format!("{:.4}", sum / *n as f64)
        } else {
            "-".into()
        };
        let _ = writeln!(err, "{:<16} {:>8} {:>14}", alg.name(), n, mean);
    }
    let _ = writeln!(err, "{} of {} trials completed", total - failures, total);
}

fn cmd_build_ckm(args: &CommonArgs) -> anyhow::Result<()> {
    init_threads(args.threads)?;
    let plan = load_plan(args)?;
    let Some(out) = plan.output.clone() else {
        bail!("build-ckm needs --out");
    };
    let config: &ScenarioConfig = &plan.base;
    let env = Environment::build(config)?;
    let file = create(&out)?;
    let mut w = BufWriter::new(file);
    env.ckm.write_to(&mut w)?;
    w.flush()?;
    eprintln!(
        "wrote {} ({} grids, {} BSs, {} samples, delta {:.6}, realized eta {:.4})",
        out.display(),
        env.ckm.grid_count(),
        env.ckm.cells(),
        env.ckm.samples(),
        env.ckm.delta(),
        env.ckm.realized_eta()
    );
    Ok(())
}

fn percentiles(mut v: Vec<f64>) -> [f64; 5] {
    if v.is_empty() {
        return [f64::NAN; 5];
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
    [at(0.0), at(0.1), at(0.5), at(0.9), at(1.0)]
}

fn cmd_inspect_ckm(args: &InspectArgs) -> anyhow::Result<()> {
    init_threads(args.threads)?;
    let mut ckm = UsCkm::load(&args.path).with_context(|| format!("loading {}", args.path.display()))?;
    if let Some(d) = args.delta {
        ckm.set_delta(d);
    }
    let mut out = io::stdout().lock();
    writeln!(out, "grids        {}", ckm.grid_count())?;
    writeln!(out, "bs_count     {}", ckm.cells())?;
    for l in 0..ckm.cells() {
        writeln!(out, "grids_bs{l:<4} {}", ckm.partition().grids_of_cell(l).count())?;
    }
    writeln!(out, "samples      {}", ckm.samples())?;
    writeln!(out, "delta        {}", ckm.delta())?;
    writeln!(out, "realized_eta {:.6}", ckm.realized_eta())?;
    let sigma_max = (0..ckm.cells())
        .flat_map(|l| ckm.bs_map(l).stats.iter().map(|s| s.sigma))
        .fold(f64::NEG_INFINITY, f64::max);
    writeln!(out, "sigma_max    {sigma_max:e}")?;

    let stats = || (0..ckm.cells()).flat_map(|l| ckm.bs_map(l).stats.iter());
    writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "quantity", "p0", "p10", "p50", "p90", "p100"
    )?;
    for (name, values) in [
        ("gain", stats().map(|s| s.epsilon).collect::<Vec<_>>()),
        ("sigma", stats().map(|s| s.sigma).collect()),
    ] {
        let p = percentiles(values);
        writeln!(
            out,
            "{:<8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            name, p[0], p[1], p[2], p[3], p[4]
        )?;
    }
    Ok(())
}
