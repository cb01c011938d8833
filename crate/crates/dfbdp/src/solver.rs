//! The backward dynamic-programming solver: numerical differentiation for
//! the z-estimate, the one-step regression target (F-function), the
//! per-step empirical loss with exact backprop, and the backward-in-time
//! training loop.
//!
//! Training walks the grid from the last interval to the first. At step `i`
//! two networks are fitted: a solution net over the state and a jump-kernel
//! net over (state, mark). Every iteration regenerates fresh paths over the
//! prefix `0..=i+1`, forms the regression target from the step-(i+1)
//! estimate (or the terminal condition), and takes one Adam step on the
//! mean squared one-step residual.
//!
//! Determinism: every random draw is derived from (master seed, run, step,
//! iteration, sample, interval); gradient reduction is blocked with a fixed
//! chunk size and combined in block order, so results are bit-identical for
//! any worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{simulate_batch, PathBatch, ProblemSpec, TimeGrid};
use crate::levy::QuadratureRule;
use crate::net::{AdamState, MlpNet, NetGrad};
use crate::rng::{derive_stream, purpose};

/// Samples per reduction block; fixed so that the gradient sum has one
/// well-defined association order regardless of thread count.
const REDUCTION_BLOCK: usize = 64;

/// The pair of networks trained for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEstimators {
    /// Time index i.
    pub step: usize,
    /// Solution estimate over the state (input dimension d).
    pub u_net: MlpNet,
    /// Jump-kernel estimate over (state, mark) (input d + mark_dim).
    pub kernel_net: MlpNet,
}

impl StepEstimators {
    /// Fresh Glorot-initialized estimators for `step`, with streams derived
    /// from the master seed and run index.
    pub fn init_random(
        problem: &ProblemSpec,
        hidden: usize,
        step: usize,
        master: u64,
        run: u64,
    ) -> Self {
        let d = problem.dim;
        let k_in = d + problem.levy.mark_dim();
        let mut u_rng = derive_stream(master, &[purpose::INIT, run, step as u64, 0]);
        let mut k_rng = derive_stream(master, &[purpose::INIT, run, step as u64, 1]);
        StepEstimators {
            step,
            u_net: MlpNet::glorot(d, hidden, &mut u_rng),
            kernel_net: MlpNet::glorot(k_in, hidden, &mut k_rng),
        }
    }
}

/// What the regression target at step i is built from: the terminal
/// condition (at the last step) or the next step's trained estimate.
#[derive(Debug, Clone, Copy)]
pub enum NextStage<'a> {
    Terminal,
    Estimators(&'a StepEstimators),
}

/// Learning-rate schedule: `initial * decay^(iteration / decay_every)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub decay_every: usize,
}

impl LrSchedule {
    pub fn constant(initial: f64) -> Self {
        LrSchedule { initial, decay: 1.0, decay_every: 1 }
    }

    pub fn at(&self, iteration: usize) -> f64 {
        if self.decay == 1.0 {
            return self.initial;
        }
        self.initial * self.decay.powi((iteration / self.decay_every) as i32)
    }
}

/// Training hyper-parameters for the backward loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Samples per batch (M).
    pub batch_size: usize,
    /// Adam iterations at the last time step (fresh networks).
    pub first_step_iters: usize,
    /// Adam iterations at warm-started steps.
    pub warm_step_iters: usize,
    pub lr: LrSchedule,
    /// Base finite-difference step; scaled per sample by max(1, |x|_inf).
    pub fd_step: f64,
    /// Node count for the continuous quadrature rules used in the loss.
    pub quad_nodes: usize,
    /// Hidden width of both networks.
    pub hidden: usize,
    pub master_seed: u64,
    /// Run index; repeated runs derive disjoint streams through it.
    pub run_index: u64,
    /// Optional constraint projection applied after every update.
    pub clip_gamma: Option<f64>,
    /// Reuse one fixed batch instead of regenerating paths (ablation).
    pub fixed_batch: bool,
}

impl TrainConfig {
    /// Reference training budget (2000 first-step iterations, 500 warm-started)
    /// for a network of hidden width `hidden`.
    pub fn new(batch_size: usize, hidden: usize, master_seed: u64) -> Self {
        TrainConfig {
            batch_size,
            first_step_iters: 2000,
            warm_step_iters: 500,
            lr: LrSchedule::constant(1e-3),
            fd_step: 1e-4,
            quad_nodes: 16,
            hidden,
            master_seed,
            run_index: 0,
            clip_gamma: None,
            fixed_batch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden width must be >= 1"));
        }
        if self.quad_nodes == 0 {
            return Err(Error::invalid("quadrature node count must be >= 1"));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        if !(self.lr.initial > 0.0) || !(self.lr.decay > 0.0) || self.lr.decay_every == 0 {
            return Err(Error::invalid("learning-rate schedule must be positive"));
        }
        if let Some(g) = self.clip_gamma {
            if !(g > 0.0) {
                return Err(Error::invalid("clip bound must be positive"));
            }
        }
        Ok(())
    }

    /// Effective finite-difference step at state `x`.
    pub fn fd_step_at(&self, x: &[f64]) -> f64 {
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        self.fd_step * scale
    }
}

/// The solved scheme: estimators for every step plus training diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSolution {
    pub estimators: Vec<StepEstimators>,
    /// Loss of the returned parameters at each step (fresh evaluation batch).
    pub final_losses: Vec<f64>,
    /// Loss recorded at every iteration of every step.
    pub loss_traces: Vec<Vec<f64>>,
    pub config: TrainConfig,
}

impl StepSolution {
    /// The trained estimate of the solution at (t_0, x0).
    pub fn y0(&self, problem: &ProblemSpec) -> Result<f64> {
        self.estimators[0].u_net.forward(&problem.x0)
    }
}

/// Central-difference gradient of the network at `x`:
/// `(forward(x + h e_j) - forward(x - h e_j)) / (2h)` per coordinate.
pub fn grad_x_numeric(net: &MlpNet, x: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if x.len() != net.in_dim {
        return Err(Error::invalid(format!(
            "input has dimension {}, network expects {}",
            x.len(),
            net.in_dim
        )));
    }
    let mut acts = vec![0.0; net.hidden];
    let mut pert = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for (j, g) in grad.iter_mut().enumerate() {
        pert[j] = x[j] + h;
        let up = net.forward_cached(&pert, &mut acts);
        pert[j] = x[j] - h;
        let down = net.forward_cached(&pert, &mut acts);
        pert[j] = x[j];
        *g = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// The scheme's z-estimate at `(t, x)`: `sigma(t, x)^T` times the numerical
/// gradient of the solution net.
pub fn z_estimate(
    problem: &ProblemSpec,
    t: f64,
    x: &[f64],
    est: &StepEstimators,
    h: f64,
) -> Result<Vec<f64>> {
    let grad = grad_x_numeric(&est.u_net, x, h)?;
    let mut z = vec![0.0; problem.dim];
    problem.diffusion.apply_transpose(t, x, &grad, &mut z);
    Ok(z)
}

/// One-step regression target:
///
/// `F = y - f(t, x, y, z, G) dt + z . dw + sum_k kernel(marks[k]) - dt * C`
///
/// with `G` the gamma-weighted integral of the kernel and `C` its plain
/// compensator integral — the compensated jump integral of the kernel
/// expanded as realized-jump sum minus compensator.
#[allow(clippy::too_many_arguments)]
pub fn f_function_value(
    problem: &ProblemSpec,
    t: f64,
    x: &[f64],
    y: f64,
    z: &[f64],
    kernel_at_x: impl Fn(&[f64]) -> f64,
    dt: f64,
    dw: &[f64],
    marks: &[Vec<f64>],
    rule: &QuadratureRule,
) -> Result<f64> {
    let gamma_hat = problem.levy.gamma_weighted_integral(&kernel_at_x, rule)?;
    let compensator = problem.levy.compensator_integral(&kernel_at_x, rule)?;
    let f_val = problem.driver.value(t, x, y, z, gamma_hat);
    if !f_val.is_finite() {
        return Err(Error::numeric(format!("driver returned {f_val} at t = {t}")));
    }
    let z_dot_dw: f64 = z.iter().zip(dw).map(|(a, b)| a * b).sum();
    let jump_sum: f64 = marks.iter().map(|e| kernel_at_x(e)).sum();
    Ok(y - f_val * dt + z_dot_dw + jump_sum - dt * compensator)
}

/// Scratch buffers for one worker's pass over a block of samples.
struct LossWorkspace {
    acts_center: Vec<f64>,
    acts_stencil: Vec<f64>,
    acts_nodes: Vec<f64>,
    acts_marks: Vec<f64>,
    pert: Vec<f64>,
    xe: Vec<f64>,
    grad_fd: Vec<f64>,
    z: Vec<f64>,
    kernel_nodes: Vec<f64>,
    dfdz: Vec<f64>,
    sv: Vec<f64>,
}

impl LossWorkspace {
    fn new(d: usize, mark_dim: usize, hidden: usize, n_nodes: usize) -> Self {
        LossWorkspace {
            acts_center: vec![0.0; hidden],
            acts_stencil: vec![0.0; 2 * d * hidden],
            acts_nodes: vec![0.0; n_nodes * hidden],
            acts_marks: Vec::new(),
            pert: vec![0.0; d],
            xe: vec![0.0; d + mark_dim],
            grad_fd: vec![0.0; d],
            z: vec![0.0; d],
            kernel_nodes: vec![0.0; n_nodes],
            dfdz: vec![0.0; d],
            sv: vec![0.0; d],
        }
    }
}

struct BlockOut {
    loss_sum: f64,
    grad_u: NetGrad,
    grad_k: NetGrad,
}

/// Loss and exact parameter gradients over one block of samples.
///
/// Gradients are raw sums of `-2 r * dF/dtheta`; the caller divides by the
/// batch size after combining blocks in order.
#[allow(clippy::too_many_arguments)]
// The inner loops walk several parallel buffers in lockstep, with
// save/mutate/restore on the stencil coordinate; index form is the
// readable one here.
#[allow(clippy::needless_range_loop)]
fn loss_block(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    i: usize,
    est: &StepEstimators,
    next_values: &[f64],
    batch: &PathBatch,
    rule: &QuadratureRule,
    gamma_at_nodes: &[f64],
    config: &TrainConfig,
    samples: std::ops::Range<usize>,
) -> Result<BlockOut> {
    let d = problem.dim;
    let hidden_u = est.u_net.hidden;
    let hidden_k = est.kernel_net.hidden;
    let n_nodes = rule.len();
    let t = grid.knot(i);
    let dt = grid.dt(i);
    let intensity = problem.levy.intensity();
    let mut ws = LossWorkspace::new(d, problem.levy.mark_dim(), hidden_u.max(hidden_k), n_nodes);
    let mut out = BlockOut {
        loss_sum: 0.0,
        grad_u: NetGrad::zeros_like(&est.u_net),
        grad_k: NetGrad::zeros_like(&est.kernel_net),
    };

    for m in samples {
        let x = batch.state(m, i);
        let dw = batch.increment(m, i);
        let marks = batch.marks(m, i);
        let h = config.fd_step_at(x);

        // --- forward pass, caching hidden activations ---
        let y = est.u_net.forward_cached(x, &mut ws.acts_center[..hidden_u]);
        ws.pert.copy_from_slice(x);
        for l in 0..d {
            ws.pert[l] = x[l] + h;
            let up = est
                .u_net
                .forward_cached(&ws.pert, &mut ws.acts_stencil[2 * l * hidden_u..][..hidden_u]);
            ws.pert[l] = x[l] - h;
            let down = est.u_net.forward_cached(
                &ws.pert,
                &mut ws.acts_stencil[(2 * l + 1) * hidden_u..][..hidden_u],
            );
            ws.pert[l] = x[l];
            ws.grad_fd[l] = (up - down) / (2.0 * h);
        }
        problem.diffusion.apply_transpose(t, x, &ws.grad_fd, &mut ws.z);

        ws.xe[..d].copy_from_slice(x);
        let mut comp_sum = 0.0;
        let mut gamma_sum = 0.0;
        for q in 0..n_nodes {
            ws.xe[d..].copy_from_slice(&rule.nodes[q]);
            let k_val = est
                .kernel_net
                .forward_cached(&ws.xe, &mut ws.acts_nodes[q * hidden_k..][..hidden_k]);
            ws.kernel_nodes[q] = k_val;
            comp_sum += rule.weights[q] * k_val;
            gamma_sum += rule.weights[q] * gamma_at_nodes[q] * k_val;
        }
        let compensator = intensity * comp_sum;
        let gamma_hat = intensity * gamma_sum;

        if ws.acts_marks.len() < marks.len() * hidden_k {
            ws.acts_marks.resize(marks.len() * hidden_k, 0.0);
        }
        let mut jump_sum = 0.0;
        for (j, mark) in marks.iter().enumerate() {
            ws.xe[d..].copy_from_slice(mark);
            jump_sum += est
                .kernel_net
                .forward_cached(&ws.xe, &mut ws.acts_marks[j * hidden_k..][..hidden_k]);
        }

        let f_val = problem.driver.value(t, x, y, &ws.z, gamma_hat);
        if !f_val.is_finite() {
            return Err(Error::numeric(format!("driver returned {f_val} at step {i}, sample {m}")));
        }
        let z_dot_dw: f64 = ws.z.iter().zip(dw).map(|(a, b)| a * b).sum();
        let target = y - f_val * dt + z_dot_dw + jump_sum - dt * compensator;
        let r = next_values[m] - target;
        out.loss_sum += r * r;

        // --- backward pass through every cached evaluation ---
        let partials = problem.driver.partials(t, x, y, &ws.z, gamma_hat);
        let dldf = -2.0 * r;
        est.u_net.backprop_cached(
            x,
            &ws.acts_center[..hidden_u],
            dldf * (1.0 - partials.dy * dt),
            &mut out.grad_u,
        );
        for l in 0..d {
            ws.dfdz[l] = dw[l] - partials.dz[l] * dt;
        }
        problem.diffusion.apply(t, x, &ws.dfdz, &mut ws.sv);
        for l in 0..d {
            let coef = dldf * ws.sv[l] / (2.0 * h);
            ws.pert[l] = x[l] + h;
            est.u_net.backprop_cached(
                &ws.pert,
                &ws.acts_stencil[2 * l * hidden_u..][..hidden_u],
                coef,
                &mut out.grad_u,
            );
            ws.pert[l] = x[l] - h;
            est.u_net.backprop_cached(
                &ws.pert,
                &ws.acts_stencil[(2 * l + 1) * hidden_u..][..hidden_u],
                -coef,
                &mut out.grad_u,
            );
            ws.pert[l] = x[l];
        }
        for q in 0..n_nodes {
            ws.xe[d..].copy_from_slice(&rule.nodes[q]);
            let coef = -dldf
                * dt
                * intensity
                * rule.weights[q]
                * (partials.dgamma * gamma_at_nodes[q] + 1.0);
            est.kernel_net.backprop_cached(
                &ws.xe,
                &ws.acts_nodes[q * hidden_k..][..hidden_k],
                coef,
                &mut out.grad_k,
            );
        }
        for (j, mark) in marks.iter().enumerate() {
            ws.xe[d..].copy_from_slice(mark);
            est.kernel_net.backprop_cached(
                &ws.xe,
                &ws.acts_marks[j * hidden_k..][..hidden_k],
                dldf,
                &mut out.grad_k,
            );
        }
    }
    Ok(out)
}

/// Empirical one-step loss and its exact parameter gradients.
///
/// `next_values[m]` must hold the step-(i+1) estimate (or terminal value) at
/// `batch.state(m, i+1)`. Returns the mean squared residual and the
/// gradients for the solution and kernel nets.
pub fn step_loss(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    i: usize,
    est: &StepEstimators,
    next_values: &[f64],
    batch: &PathBatch,
    config: &TrainConfig,
) -> Result<(f64, NetGrad, NetGrad)> {
    let m_samples = batch.n_samples();
    if next_values.len() != m_samples {
        return Err(Error::invalid(format!(
            "got {} next-step values for {} samples",
            next_values.len(),
            m_samples
        )));
    }
    if i + 1 > batch.grid().n_steps() {
        return Err(Error::invalid(format!(
            "step {i} out of range for a batch with {} intervals",
            batch.grid().n_steps()
        )));
    }
    let rule = problem.levy.quadrature_rule(config.quad_nodes);
    let gamma_at_nodes: Vec<f64> =
        rule.nodes.iter().map(|node| problem.levy.gamma_weight().eval(node)).collect();

    let n_blocks = m_samples.div_ceil(REDUCTION_BLOCK);
    let blocks: Vec<BlockOut> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * REDUCTION_BLOCK;
            let hi = (lo + REDUCTION_BLOCK).min(m_samples);
            loss_block(
                problem,
                grid,
                i,
                est,
                next_values,
                batch,
                &rule,
                &gamma_at_nodes,
                config,
                lo..hi,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut loss = 0.0;
    let mut grad_u = NetGrad::zeros_like(&est.u_net);
    let mut grad_k = NetGrad::zeros_like(&est.kernel_net);
    for block in blocks {
        loss += block.loss_sum;
        grad_u.add(&block.grad_u);
        grad_k.add(&block.grad_k);
    }
    let inv_m = 1.0 / m_samples as f64;
    grad_u.scale(inv_m);
    grad_k.scale(inv_m);
    Ok((loss * inv_m, grad_u, grad_k))
}

/// The step-(i+1) side of the regression target for every sample.
fn target_values(
    problem: &ProblemSpec,
    next: NextStage<'_>,
    batch: &PathBatch,
    i: usize,
) -> Result<Vec<f64>> {
    (0..batch.n_samples())
        .into_par_iter()
        .map(|m| {
            let x_next = batch.state(m, i + 1);
            match next {
                NextStage::Terminal => Ok((problem.terminal)(x_next)),
                NextStage::Estimators(est) => est.u_net.forward(x_next),
            }
        })
        .collect()
}

/// Outcome of training one time step.
#[derive(Debug, Clone)]
pub struct TrainedStep {
    pub estimators: StepEstimators,
    /// Loss at every iteration (before that iteration's update).
    pub trace: Vec<f64>,
    /// Loss of the final parameters on a fresh batch.
    pub final_loss: f64,
}

/// Fit the step-`i` estimators against the next stage.
///
/// Warm-starts from the step-(i+1) networks when available; the last step
/// starts from fresh random networks. Every iteration draws a fresh path
/// batch over intervals `0..=i` (unless the config pins one batch).
pub fn train_step(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    i: usize,
    next: NextStage<'_>,
    config: &TrainConfig,
) -> Result<TrainedStep> {
    config.validate()?;
    let n = grid.n_steps();
    if i >= n {
        return Err(Error::invalid(format!("step {i} out of range for {n} intervals")));
    }
    if i + 1 < n && matches!(next, NextStage::Terminal) {
        return Err(Error::invalid("terminal stage is only valid at the last step"));
    }

    let mut est = match next {
        NextStage::Estimators(prev) => StepEstimators {
            step: i,
            u_net: prev.u_net.clone(),
            kernel_net: prev.kernel_net.clone(),
        },
        NextStage::Terminal => StepEstimators::init_random(
            problem,
            config.hidden,
            i,
            config.master_seed,
            config.run_index,
        ),
    };
    let mut adam_u = AdamState::new(&est.u_net, config.lr.initial);
    let mut adam_k = AdamState::new(&est.kernel_net, config.lr.initial);
    let iterations = if i + 1 == n { config.first_step_iters } else { config.warm_step_iters };
    let prefix = grid.prefix(i + 1);
    let run = config.run_index;

    let mut trace = Vec::with_capacity(iterations);
    let simulate = |iter: usize| -> Result<PathBatch> {
        let iter_tag = if config.fixed_batch { 0 } else { iter as u64 };
        simulate_batch(
            problem,
            &prefix,
            config.batch_size,
            config.master_seed,
            &[purpose::PATHS, run, i as u64, iter_tag],
        )
    };

    for iter in 0..iterations {
        let batch = simulate(iter)?;
        let next_values = target_values(problem, next, &batch, i)?;
        let (loss, grad_u, grad_k) =
            step_loss(problem, grid, i, &est, &next_values, &batch, config)?;
        if !loss.is_finite() {
            let tail: Vec<f64> = trace.iter().rev().take(5).copied().collect();
            return Err(Error::numeric(format!(
                "non-finite loss {loss} at step {i}, iteration {iter}; last losses {tail:?}"
            )));
        }
        trace.push(loss);
        let lr = config.lr.at(iter);
        adam_u.learning_rate = lr;
        adam_k.learning_rate = lr;
        adam_u.adam_update(&mut est.u_net, &grad_u)?;
        adam_k.adam_update(&mut est.kernel_net, &grad_k)?;
        if let Some(gamma_m) = config.clip_gamma {
            est.u_net = est.u_net.clip_to_theta_gamma(gamma_m)?;
            est.kernel_net = est.kernel_net.clip_to_theta_gamma(gamma_m)?;
        }
    }

    // Loss of the returned parameters, on one more fresh batch.
    let batch = simulate(iterations)?;
    let next_values = target_values(problem, next, &batch, i)?;
    let (final_loss, _, _) = step_loss(problem, grid, i, &est, &next_values, &batch, config)?;
    Ok(TrainedStep { estimators: est, trace, final_loss })
}

/// Run the full backward loop i = N-1, ..., 0.
pub fn solve(problem: &ProblemSpec, grid: &TimeGrid, config: &TrainConfig) -> Result<StepSolution> {
    problem.validate()?;
    config.validate()?;
    let n = grid.n_steps();
    let mut estimators: Vec<StepEstimators> = Vec::with_capacity(n);
    let mut final_losses = vec![0.0; n];
    let mut loss_traces: Vec<Vec<f64>> = vec![Vec::new(); n];
    for back in 0..n {
        let i = n - 1 - back;
        let next = match estimators.last() {
            None => NextStage::Terminal,
            Some(prev) => NextStage::Estimators(prev),
        };
        let trained = train_step(problem, grid, i, next, config)?;
        final_losses[i] = trained.final_loss;
        loss_traces[i] = trained.trace;
        estimators.push(trained.estimators);
    }
    estimators.reverse();
    debug_assert!(estimators.iter().enumerate().all(|(i, e)| e.step == i));
    Ok(StepSolution { estimators, final_losses, loss_traces, config: config.clone() })
}
