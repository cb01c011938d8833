//! Error measures and oracles: relative errors, repeated-run statistics,
//! scheme error measures against exact solutions, L²-regularity probes, and
//! the one-step residual of the exact solution.
//!
//! Everything here evaluates on fresh batches derived from the evaluation
//! branch of the seed tree, so reported numbers are independent of training
//! randomness and bit-reproducible for a fixed (config, seed) pair.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{euler_step, simulate_batch, ProblemSpec, TimeGrid};
use crate::rng::{derive_key, derive_stream, purpose};
use crate::solver::{solve, z_estimate, StepSolution, TrainConfig};

/// Sub-intervals per grid interval when approximating time integrals.
const REFINE_SUB: usize = 8;
/// Samples per deterministic reduction block.
const BLOCK: usize = 64;

/// Probe tags keeping evaluation streams of different estimators disjoint.
mod probe {
    pub const SCHEME: u64 = 1;
    pub const REGULARITY: u64 = 2;
    pub const RESIDUAL: u64 = 3;
}

/// Outcome of a single solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_index: u64,
    /// Derived scalar identifying this run's random streams.
    pub run_seed: u64,
    pub y0_estimate: f64,
    pub exact_y0: Option<f64>,
    /// `|estimate - exact| / |exact|`, when an exact solution is attached.
    pub rel_l1: Option<f64>,
    pub final_losses: Vec<f64>,
    pub wall_time_s: f64,
}

/// Statistics over repeated independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsSummary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub stddev: f64,
    pub reports: Vec<RunReport>,
}

/// Relative L1 error `|estimate - exact| / |exact|`.
pub fn relative_l1(estimate: f64, exact: f64) -> Result<f64> {
    if exact == 0.0 {
        return Err(Error::invalid("relative error is undefined against an exact value of 0"));
    }
    Ok((estimate - exact).abs() / exact.abs())
}

/// Run the solver `r_runs` times with per-run derived streams and summarize
/// the initial-value estimates. Reports are ordered by run index.
pub fn repeated_runs(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    config: &TrainConfig,
    r_runs: usize,
) -> Result<RunsSummary> {
    if r_runs == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let exact_y0 = problem.exact.as_ref().map(|e| (e.u)(0.0, &problem.x0));
    let reports: Vec<RunReport> = (0..r_runs as u64)
        .into_par_iter()
        .map(|r| -> Result<RunReport> {
            let mut run_config = config.clone();
            run_config.run_index = r;
            let started = Instant::now();
            let solution = solve(problem, grid, &run_config)
                .map_err(|e| Error::numeric(format!("run {r}: {e}")))?;
            let y0 = solution.y0(problem)?;
            let rel_l1 = match exact_y0 {
                Some(exact) if exact != 0.0 => Some(relative_l1(y0, exact)?),
                _ => None,
            };
            Ok(RunReport {
                run_index: r,
                run_seed: derive_key(config.master_seed, &[purpose::RUN, r]),
                y0_estimate: y0,
                exact_y0,
                rel_l1,
                final_losses: solution.final_losses,
                wall_time_s: started.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mean = reports.iter().map(|r| r.y0_estimate).sum::<f64>() / r_runs as f64;
    let stddev = if r_runs < 2 {
        0.0
    } else {
        let ss: f64 = reports.iter().map(|r| (r.y0_estimate - mean).powi(2)).sum();
        (ss / (r_runs - 1) as f64).sqrt()
    };
    Ok(RunsSummary { mean, stddev, reports })
}

/// The three-term scheme error: worst-knot mean-square solution error plus
/// time-integrated mean-square control and jump-term errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeErrorMeasure {
    /// `max_i mean |Y_{t_i} - Yhat_i(X_{t_i})|^2`.
    pub max_y_error: f64,
    /// `sum_i integral over the interval of mean |Z_t - Zhat_i|^2 dt`.
    pub z_integral_error: f64,
    /// Same time-integrated gap for the weighted jump term.
    pub gamma_integral_error: f64,
}

/// Per-interval estimates held constant while the exact process moves.
trait StepEvaluator: Sync {
    /// (y, z, gamma) estimates frozen at the left knot `(t_i, x)`.
    fn at_knot(&self, i: usize, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>, f64)>;
}

struct NetEvaluator<'a> {
    solution: &'a StepSolution,
    problem: &'a ProblemSpec,
    rule: crate::levy::QuadratureRule,
}

impl StepEvaluator for NetEvaluator<'_> {
    fn at_knot(&self, i: usize, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let est = &self.solution.estimators[i];
        let y = est.u_net.forward(x)?;
        let h = self.solution.config.fd_step_at(x);
        let z = z_estimate(self.problem, t, x, est, h)?;
        let kernel = |e: &[f64]| {
            let mut input = x.to_vec();
            input.extend_from_slice(e);
            est.kernel_net.forward(&input).unwrap_or(f64::NAN)
        };
        let gamma = self.problem.levy.gamma_weighted_integral(kernel, &self.rule)?;
        Ok((y, z, gamma))
    }
}

struct ExactEvaluator<'a> {
    problem: &'a ProblemSpec,
}

impl StepEvaluator for ExactEvaluator<'_> {
    fn at_knot(&self, _i: usize, t: f64, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let exact = self.problem.exact.as_ref().expect("checked by caller");
        let y = (exact.u)(t, x);
        let grad = (exact.grad_u)(t, x);
        let mut z = vec![0.0; self.problem.dim];
        self.problem.diffusion.apply_transpose(t, x, &grad, &mut z);
        Ok((y, z, (exact.gamma)(t, x)))
    }
}

/// Walk one refined path, visiting every sub-knot `(i, s, t, x)` before the
/// Euler step that leaves it.
fn walk_refined<V>(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    master: u64,
    probe_tag: u64,
    sample: usize,
    mut visit: V,
) -> Result<()>
where
    V: FnMut(usize, usize, f64, &[f64]) -> Result<()>,
{
    let d = problem.dim;
    let mut x = problem.x0.clone();
    let mut dw = vec![0.0; d];
    for i in 0..grid.n_steps() {
        let dt_sub = grid.dt(i) / REFINE_SUB as f64;
        let scale = dt_sub.sqrt();
        for s in 0..REFINE_SUB {
            let t = grid.knot(i) + s as f64 * dt_sub;
            visit(i, s, t, &x)?;
            let mut rng = derive_stream(
                master,
                &[purpose::EVAL, probe_tag, sample as u64, (i * REFINE_SUB + s) as u64],
            );
            for v in dw.iter_mut() {
                *v = scale * rng.sample::<f64, _>(StandardNormal);
            }
            let marks = problem.levy.sample_jump_marks(dt_sub, &mut rng)?;
            x = euler_step(problem, t, dt_sub, &x, &dw, &marks)
                .map_err(|e| Error::numeric(format!("sample {sample}: {e}")))?;
        }
    }
    Ok(())
}

fn require_exact(problem: &ProblemSpec) -> Result<()> {
    if problem.exact.is_none() {
        return Err(Error::unsupported("this measure needs a problem with exact solution fields"));
    }
    Ok(())
}

fn error_measure_with(
    evaluator: &dyn StepEvaluator,
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_eval: usize,
    master: u64,
) -> Result<SchemeErrorMeasure> {
    require_exact(problem)?;
    if m_eval == 0 {
        return Err(Error::invalid("need at least one evaluation sample"));
    }
    let exact = problem.exact.as_ref().unwrap();
    let n = grid.n_steps();
    let d = problem.dim;
    let n_blocks = m_eval.div_ceil(BLOCK);

    struct Acc {
        y_sq: Vec<f64>,
        z_int: Vec<f64>,
        g_int: Vec<f64>,
    }
    let blocks: Vec<Acc> = (0..n_blocks)
        .into_par_iter()
        .map(|b| -> Result<Acc> {
            let mut acc = Acc { y_sq: vec![0.0; n], z_int: vec![0.0; n], g_int: vec![0.0; n] };
            let mut frozen: (f64, Vec<f64>, f64) = (0.0, vec![0.0; d], 0.0);
            for m in b * BLOCK..((b + 1) * BLOCK).min(m_eval) {
                walk_refined(problem, grid, master, probe::SCHEME, m, |i, s, t, x| {
                    if s == 0 {
                        frozen = evaluator.at_knot(i, t, x)?;
                        let y_exact = (exact.u)(t, x);
                        acc.y_sq[i] += (y_exact - frozen.0).powi(2);
                    }
                    let dt_sub = grid.dt(i) / REFINE_SUB as f64;
                    let grad = (exact.grad_u)(t, x);
                    let mut z_exact = vec![0.0; d];
                    problem.diffusion.apply_transpose(t, x, &grad, &mut z_exact);
                    let z_gap: f64 =
                        z_exact.iter().zip(&frozen.1).map(|(a, b)| (a - b).powi(2)).sum();
                    acc.z_int[i] += dt_sub * z_gap;
                    let g_gap = ((exact.gamma)(t, x) - frozen.2).powi(2);
                    acc.g_int[i] += dt_sub * g_gap;
                    Ok(())
                })?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut y_sq = vec![0.0; n];
    let mut z_int = 0.0;
    let mut g_int = 0.0;
    for acc in blocks {
        for (total, v) in y_sq.iter_mut().zip(&acc.y_sq) {
            *total += v;
        }
        z_int += acc.z_int.iter().sum::<f64>();
        g_int += acc.g_int.iter().sum::<f64>();
    }
    let inv_m = 1.0 / m_eval as f64;
    Ok(SchemeErrorMeasure {
        max_y_error: y_sq.iter().fold(0.0f64, |a, &b| a.max(b)) * inv_m,
        z_integral_error: z_int * inv_m,
        gamma_integral_error: g_int * inv_m,
    })
}

/// Evaluate a trained solution against the exact fields on a fresh batch.
///
/// The per-interval estimates (solution value at the knot, z from the
/// differentiated solution net, gamma from the kernel net) are held constant
/// while the exact process moves through the interval.
pub fn scheme_error_measure(
    solution: &StepSolution,
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_eval: usize,
) -> Result<SchemeErrorMeasure> {
    if solution.estimators.len() != grid.n_steps() {
        return Err(Error::invalid(format!(
            "solution covers {} steps, grid has {}",
            solution.estimators.len(),
            grid.n_steps()
        )));
    }
    let evaluator = NetEvaluator {
        solution,
        problem,
        rule: problem.levy.quadrature_rule(solution.config.quad_nodes),
    };
    error_measure_with(&evaluator, problem, grid, m_eval, solution.config.master_seed)
}

/// The same measure with the exact solution frozen at the left knots in
/// place of the networks; its size is pure time-discretization error.
pub fn exact_plug_error_measure(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_eval: usize,
    master: u64,
) -> Result<SchemeErrorMeasure> {
    let evaluator = ExactEvaluator { problem };
    error_measure_with(&evaluator, problem, grid, m_eval, master)
}

/// L²-regularity functionals: time-integrated mean-square gaps between the
/// exact control/jump processes and their empirical per-interval averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub eps_z: f64,
    pub eps_gamma: f64,
}

/// Estimate the regularity functionals on `m_samples` refined paths.
pub fn regularity_probe(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_samples: usize,
    master: u64,
) -> Result<RegularityProbe> {
    require_exact(problem)?;
    if m_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let exact = problem.exact.as_ref().unwrap();
    let d = problem.dim;
    let n_blocks = m_samples.div_ceil(BLOCK);

    let blocks: Vec<(f64, f64)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| -> Result<(f64, f64)> {
            let mut eps_z = 0.0;
            let mut eps_g = 0.0;
            // per-interval sub-samples of the exact processes
            let mut z_vals = vec![0.0; REFINE_SUB * d];
            let mut g_vals = [0.0; REFINE_SUB];
            for m in b * BLOCK..((b + 1) * BLOCK).min(m_samples) {
                walk_refined(problem, grid, master, probe::REGULARITY, m, |i, s, t, x| {
                    let grad = (exact.grad_u)(t, x);
                    problem.diffusion.apply_transpose(t, x, &grad, &mut z_vals[s * d..(s + 1) * d]);
                    g_vals[s] = (exact.gamma)(t, x);
                    if s + 1 == REFINE_SUB {
                        let dt_sub = grid.dt(i) / REFINE_SUB as f64;
                        let inv_q = 1.0 / REFINE_SUB as f64;
                        for j in 0..d {
                            let mean: f64 =
                                (0..REFINE_SUB).map(|r| z_vals[r * d + j]).sum::<f64>() * inv_q;
                            eps_z += dt_sub
                                * (0..REFINE_SUB)
                                    .map(|r| (z_vals[r * d + j] - mean).powi(2))
                                    .sum::<f64>();
                        }
                        let g_mean: f64 = g_vals.iter().sum::<f64>() * inv_q;
                        eps_g += dt_sub * g_vals.iter().map(|g| (g - g_mean).powi(2)).sum::<f64>();
                    }
                    Ok(())
                })?;
            }
            Ok((eps_z, eps_g))
        })
        .collect::<Result<Vec<_>>>()?;

    let (mut eps_z, mut eps_g) = (0.0, 0.0);
    for (z, g) in blocks {
        eps_z += z;
        eps_g += g;
    }
    let inv_m = 1.0 / m_samples as f64;
    Ok(RegularityProbe { eps_z: eps_z * inv_m, eps_gamma: eps_g * inv_m })
}

/// Mean-square one-step residual of the exact solution per grid interval:
/// plug the exact value, control, and jump kernel into the one-step relation
/// and measure `mean |u(t_{i+1}, X_{i+1}) - F_i|^2` on a fresh batch.
///
/// The per-step values decay like the squared mesh; their sum decays like
/// the mesh itself.
pub fn exact_one_step_residual(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_samples: usize,
    quad_nodes: usize,
    master: u64,
) -> Result<Vec<f64>> {
    require_exact(problem)?;
    if m_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let exact = problem.exact.as_ref().unwrap();
    let batch =
        simulate_batch(problem, grid, m_samples, master, &[purpose::EVAL, probe::RESIDUAL])?;
    let rule = problem.levy.quadrature_rule(quad_nodes);
    let d = problem.dim;

    (0..grid.n_steps())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let t = grid.knot(i);
            let t_next = grid.knot(i + 1);
            let dt = grid.dt(i);
            let mut sq_sum = 0.0;
            for m in 0..m_samples {
                let x = batch.state(m, i);
                let y = (exact.u)(t, x);
                let grad = (exact.grad_u)(t, x);
                let mut z = vec![0.0; d];
                problem.diffusion.apply_transpose(t, x, &grad, &mut z);
                let kernel = |e: &[f64]| {
                    let shifted: Vec<f64> =
                        x.iter().zip(problem.jump.eval(t, x, e)).map(|(xi, b)| xi + b).collect();
                    (exact.u)(t, &shifted) - y
                };
                let f_val = crate::solver::f_function_value(
                    problem,
                    t,
                    x,
                    y,
                    &z,
                    kernel,
                    dt,
                    batch.increment(m, i),
                    batch.marks(m, i),
                    &rule,
                )
                .map_err(|e| Error::numeric(format!("sample {m}: {e}")))?;
                let next = (exact.u)(t_next, batch.state(m, i + 1));
                sq_sum += (next - f_val).powi(2);
            }
            Ok(sq_sum / m_samples as f64)
        })
        .collect()
}
