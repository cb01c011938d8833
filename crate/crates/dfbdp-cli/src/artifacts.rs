//! CSV and JSON artifact writers plus the console summary table.
//!
//! Floating-point columns use Rust's shortest round-trip formatting, so a
//! repeated run with the same config and seed reproduces every summary file
//! byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use dfbdp::error::{Error, Result};
use dfbdp::forward::{PathBatch, ProblemSpec, TimeGrid};
use dfbdp::metrics::RunReport;
use dfbdp::solver::{grad_x_numeric, StepSolution};

/// One row of the experiment summary (one benchmark setup).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub benchmark: String,
    pub dim: usize,
    pub steps: usize,
    pub batch: usize,
    pub runs: usize,
    pub mean: f64,
    pub stddev: f64,
    /// Relative error of the mean against the exact value, when known.
    pub rel_l1: Option<f64>,
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_all(path: &Path, contents: &str) -> Result<()> {
    let mut file = create(path)?;
    file.write_all(contents.as_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `summary.csv`: one deterministic row per benchmark setup.
pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut s = String::from("benchmark,d,n,m,runs,mean,stddev,rel_l1\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.benchmark,
            r.dim,
            r.steps,
            r.batch,
            r.runs,
            r.mean,
            r.stddev,
            opt_f64(r.rel_l1)
        ));
    }
    write_all(path, &s)
}

/// `per_run.csv`: per-run estimates, seeds, and wall times.
pub fn write_per_run(path: &Path, reports: &[RunReport]) -> Result<()> {
    let mut s = String::from("run,run_seed,y0_estimate,exact_y0,rel_l1,wall_time_s\n");
    for r in reports {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.run_index,
            r.run_seed,
            r.y0_estimate,
            opt_f64(r.exact_y0),
            opt_f64(r.rel_l1),
            r.wall_time_s
        ));
    }
    write_all(path, &s)
}

/// `loss_trace_run{r}.csv`: the loss recorded at every training iteration.
pub fn write_loss_trace(path: &Path, solution: &StepSolution) -> Result<()> {
    let mut s = String::from("step,iteration,loss\n");
    for (step, trace) in solution.loss_traces.iter().enumerate() {
        for (iteration, loss) in trace.iter().enumerate() {
            s.push_str(&format!("{step},{iteration},{loss}\n"));
        }
    }
    write_all(path, &s)
}

/// Nominal curve times; each maps to the nearest grid knot.
pub const CURVE_TIMES: [f64; 4] = [0.0, 0.33, 0.66, 0.96];
/// Spatial grid for solution curves: 200 points on [0, pi].
pub const CURVE_POINTS: usize = 200;

/// `u_curve_t{tag}.csv` files comparing the trained solution and its
/// derivative against the exact fields along a spatial slice.
///
/// Only meaningful for one-dimensional problems with exact solutions; the
/// predicted columns are evaluated at the grid knot nearest each nominal
/// time, and the exact columns use that same knot time.
pub fn write_curves(
    dir: &Path,
    problem: &ProblemSpec,
    grid: &TimeGrid,
    solution: &StepSolution,
) -> Result<()> {
    if problem.dim != 1 {
        return Err(Error::unsupported("solution curves need a one-dimensional problem"));
    }
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::unsupported("solution curves need exact fields"))?;
    let n = grid.n_steps();
    for nominal in CURVE_TIMES {
        let idx = ((nominal / grid.horizon() * n as f64).round() as usize).min(n - 1);
        let t = grid.knot(idx);
        let est = &solution.estimators[idx];
        let mut s = String::from("x,u_exact,u_pred,dxu_exact,dxu_pred\n");
        for j in 0..CURVE_POINTS {
            let x = std::f64::consts::PI * j as f64 / (CURVE_POINTS - 1) as f64;
            let xs = [x];
            let u_exact = (exact.u)(t, &xs);
            let u_pred = est.u_net.forward(&xs)?;
            let dxu_exact = (exact.grad_u)(t, &xs)[0];
            let h = solution.config.fd_step_at(&xs);
            let dxu_pred = grad_x_numeric(&est.u_net, &xs, h)?[0];
            s.push_str(&format!("{x},{u_exact},{u_pred},{dxu_exact},{dxu_pred}\n"));
        }
        let file = dir.join(format!("u_curve_t{nominal}.csv"));
        write_all(&file, &s)?;
    }
    Ok(())
}

/// `y_path.csv`: the solution process along one sampled trajectory.
///
/// Row i holds (t_i, exact Y, predicted Y, jump flag); the flag marks a jump
/// in the interval ending at t_i, and the terminal row uses the terminal
/// condition as the prediction.
pub fn write_y_path(
    path: &Path,
    problem: &ProblemSpec,
    grid: &TimeGrid,
    solution: &StepSolution,
    batch: &PathBatch,
    sample: usize,
) -> Result<()> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::unsupported("the solution path dump needs exact fields"))?;
    let n = grid.n_steps();
    let mut s = String::from("t,y_exact,y_pred,jump_flag\n");
    for i in 0..=n {
        let t = grid.knot(i);
        let x = batch.state(sample, i);
        let y_exact = (exact.u)(t, x);
        let y_pred =
            if i < n { solution.estimators[i].u_net.forward(x)? } else { (problem.terminal)(x) };
        let jump_flag = usize::from(i > 0 && !batch.marks(sample, i - 1).is_empty());
        s.push_str(&format!("{t},{y_exact},{y_pred},{jump_flag}\n"));
    }
    write_all(path, &s)
}

/// `forward_paths.csv`: raw simulated states for the first few samples.
pub fn write_forward_paths(path: &Path, batch: &PathBatch, max_samples: usize) -> Result<()> {
    let grid = batch.grid();
    let n = grid.n_steps();
    let dim = batch.dim();
    let mut s = String::from("sample,i,t");
    for j in 1..=dim {
        s.push_str(&format!(",x_{j}"));
    }
    s.push_str(",jump_count\n");
    for m in 0..batch.n_samples().min(max_samples) {
        for i in 0..=n {
            s.push_str(&format!("{m},{i},{}", grid.knot(i)));
            for v in batch.state(m, i) {
                s.push_str(&format!(",{v}"));
            }
            let jumps = if i < n { batch.marks(m, i).len() } else { 0 };
            s.push_str(&format!(",{jumps}\n"));
        }
    }
    write_all(path, &s)
}

/// `checkpoint_run{r}.json`: the full trained solution, reloadable.
pub fn write_checkpoint(path: &Path, solution: &StepSolution) -> Result<()> {
    let file = create(path)?;
    serde_json::to_writer(file, solution)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))
}

pub fn read_checkpoint(path: &Path) -> Result<StepSolution> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_reader(file)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))
}

/// `diagnostic.txt` written when a run fails, so failures are inspectable.
pub fn write_diagnostic(dir: &Path, config_text: &str, message: &str) -> Result<PathBuf> {
    let path = dir.join("diagnostic.txt");
    write_all(&path, &format!("error: {message}\n\nconfig:\n{config_text}"))?;
    Ok(path)
}

/// Fixed-width console table mirroring the summary CSV.
pub fn print_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<16} {:>4} {:>5} {:>6} {:>5} {:>10} {:>10} {:>10}\n",
        "benchmark", "d", "N", "M", "runs", "mean", "stddev", "rel_l1"
    );
    for r in rows {
        let rel = r.rel_l1.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".to_string());
        s.push_str(&format!(
            "{:<16} {:>4} {:>5} {:>6} {:>5} {:>10.6} {:>10.6} {:>10}\n",
            r.benchmark, r.dim, r.steps, r.batch, r.runs, r.mean, r.stddev, rel
        ));
    }
    s
}
