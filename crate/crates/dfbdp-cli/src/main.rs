//! Experiment runner: solves a configured benchmark, reports run statistics,
//! and writes the requested CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numeric or I/O failure.

// Validation guards are written `!(x > 0.0)` on purpose: unlike `x <= 0.0`
// they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dfbdp::benchmarks::make_problem;
use dfbdp::error::{Error, Result};
use dfbdp::forward::{simulate_batch, TimeGrid};
use dfbdp::metrics::{relative_l1, repeated_runs};
use dfbdp::rng::purpose;
use dfbdp::solver::solve;

use artifacts::SummaryRow;
use config::{parse_config, ExperimentConfig};

/// Stream tag for the evaluation batch behind the path dumps.
const DUMP_TAG: u64 = 0xd0;

#[derive(Parser)]
#[command(name = "dfbdp", about = "Benchmark runner for the deep backward PIDE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured benchmark and write artifacts.
    Solve {
        /// Experiment config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the worker thread count (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let text = read_config(&config)?;
            parse_config(&text)?;
            println!("ok: {}", config.display());
            Ok(())
        }
        Command::Solve { config, seed, workers, out } => {
            if let Some(w) = workers {
                if w == 0 {
                    return Err(Error::invalid("--workers must be at least 1"));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build_global()
                    .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            }
            let text = read_config(&config)?;
            let mut experiment = parse_config(&text)?;
            if let Some(s) = seed {
                experiment.train.master_seed = s;
            }
            if let Some(dir) = out {
                experiment.out_dir = dir.display().to_string();
            }
            match run_experiment(&experiment) {
                Ok(()) => Ok(()),
                Err(err @ Error::InvalidArgument(_)) => Err(err),
                Err(err) => {
                    // Leave a diagnostic next to the partial outputs.
                    let dir = PathBuf::from(&experiment.out_dir);
                    let written =
                        artifacts::write_diagnostic(&dir, &experiment.render(), &err.to_string());
                    if let Ok(path) = written {
                        eprintln!("diagnostic written to {}", path.display());
                    }
                    Err(err)
                }
            }
        }
    }
}

fn read_config(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Solve the configured benchmark over the requested runs and write the
/// selected artifacts. Heavy per-run dumps (traces, curves, paths,
/// checkpoints) describe run 0, re-derived bit-identically when needed.
fn run_experiment(experiment: &ExperimentConfig) -> Result<()> {
    experiment.validate()?;
    let problem = make_problem(experiment.benchmark)?;
    let grid = if experiment.knots.is_empty() {
        TimeGrid::uniform(experiment.horizon, experiment.steps)?
    } else {
        TimeGrid::from_knots(experiment.knots.clone())?
    };
    let out_dir = PathBuf::from(&experiment.out_dir);

    let summary = repeated_runs(&problem, &grid, &experiment.train, experiment.runs)?;
    let exact_y0 = problem.exact.as_ref().map(|e| (e.u)(0.0, &problem.x0));
    let rel_l1 = match exact_y0 {
        Some(exact) if exact != 0.0 => Some(relative_l1(summary.mean, exact)?),
        _ => None,
    };
    let row = SummaryRow {
        benchmark: experiment.benchmark.name().to_string(),
        dim: experiment.benchmark.dim(),
        steps: experiment.steps,
        batch: experiment.train.batch_size,
        runs: experiment.runs,
        mean: summary.mean,
        stddev: summary.stddev,
        rel_l1,
    };
    print!("{}", artifacts::print_summary(std::slice::from_ref(&row)));

    if experiment.emit.summary {
        artifacts::write_summary(&out_dir.join("summary.csv"), &[row])?;
        artifacts::write_per_run(&out_dir.join("per_run.csv"), &summary.reports)?;
    }

    let needs_solution = experiment.emit.loss_traces
        || experiment.emit.checkpoints
        || experiment.emit.curves
        || experiment.emit.paths;
    if !needs_solution {
        return Ok(());
    }
    let solution = solve(&problem, &grid, &experiment.train)?;
    if experiment.emit.loss_traces {
        artifacts::write_loss_trace(&out_dir.join("loss_trace_run0.csv"), &solution)?;
    }
    if experiment.emit.checkpoints {
        let path = out_dir.join("checkpoint_run0.json");
        artifacts::write_checkpoint(&path, &solution)?;
        // Read back immediately so a truncated or unloadable checkpoint
        // fails the run instead of a later consumer.
        let restored = artifacts::read_checkpoint(&path)?;
        if restored.estimators.len() != solution.estimators.len() {
            return Err(Error::numeric(format!(
                "checkpoint verification failed for {}",
                path.display()
            )));
        }
    }
    if experiment.emit.curves {
        artifacts::write_curves(&out_dir, &problem, &grid, &solution)?;
    }
    if experiment.emit.paths {
        let batch = simulate_batch(
            &problem,
            &grid,
            8,
            experiment.train.master_seed,
            &[purpose::EVAL, DUMP_TAG],
        )?;
        artifacts::write_forward_paths(&out_dir.join("forward_paths.csv"), &batch, 5)?;
        if problem.exact.is_some() {
            artifacts::write_y_path(
                &out_dir.join("y_path.csv"),
                &problem,
                &grid,
                &solution,
                &batch,
                0,
            )?;
        }
    }
    Ok(())
}
