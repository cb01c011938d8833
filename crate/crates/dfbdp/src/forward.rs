//! Forward jump-diffusion simulation: the time grid, the problem
//! description (coefficients, driver, terminal condition, jump model), and
//! the Euler scheme with compensated Poisson jumps.
//!
//! Paths are regenerated constantly during training, so `PathBatch` keeps
//! states and Brownian increments in flat row-major arrays and the stepper
//! works in-place on slices. Randomness is derived per (sample, interval)
//! from caller-supplied tags, which makes batches independent of worker
//! count and bit-reproducible.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::rng::derive_stream;

/// Ascending partition 0 = t_0 < t_1 < ... < t_N = T.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n` steps over `[0, horizon]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::invalid("time horizon must be positive"));
        }
        if n == 0 {
            return Err(Error::invalid("time grid needs at least one step"));
        }
        let knots = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        Ok(TimeGrid { knots })
    }

    /// Grid from explicit knots; must start at 0 and increase strictly.
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("time grid needs at least two knots"));
        }
        if knots[0] != 0.0 {
            return Err(Error::invalid("time grid must start at t = 0"));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "time grid knots must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(TimeGrid { knots })
    }

    /// Number of intervals N.
    pub fn n_steps(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.knots[i]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Mesh size |pi| = max interval length.
    pub fn mesh(&self) -> f64 {
        (0..self.n_steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    /// The sub-grid covering intervals `0..n` (knots `t_0..=t_n`).
    pub fn prefix(&self, n: usize) -> TimeGrid {
        assert!(n >= 1 && n <= self.n_steps());
        TimeGrid { knots: self.knots[..=n].to_vec() }
    }

    /// Each interval split into `q` equal parts (refined reference grid).
    pub fn refine(&self, q: usize) -> TimeGrid {
        assert!(q >= 1);
        let mut knots = Vec::with_capacity(self.n_steps() * q + 1);
        for i in 0..self.n_steps() {
            let (a, dt) = (self.knots[i], self.dt(i));
            for k in 0..q {
                knots.push(a + dt * k as f64 / q as f64);
            }
        }
        knots.push(self.horizon());
        TimeGrid { knots }
    }
}

/// Dense row-major matrix; small (d x d) diffusion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// out = A v
    #[inline]
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *slot = acc;
        }
    }

    /// out = A^T v
    #[inline]
    pub fn tr_mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (r, &vr) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }
}

/// Vector field of time and state, `(t, x) -> v`.
pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;
/// Scalar field of time and state, `(t, x) -> r`.
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
/// Matrix field of time and state, `(t, x) -> A`.
pub type MatrixField = Arc<dyn Fn(f64, &[f64]) -> Matrix + Send + Sync>;
/// Jump displacement map `(t, x, mark) -> beta`.
pub type JumpField = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Terminal condition `x -> g(x)`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// State-space vector field used for the drift coefficient.
#[derive(Clone)]
pub enum Drift {
    Zero,
    Custom(VectorField),
}

impl Drift {
    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            Drift::Zero => vec![0.0; x.len()],
            Drift::Custom(f) => f(t, x),
        }
    }
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Drift::Zero"),
            Drift::Custom(_) => write!(f, "Drift::Custom"),
        }
    }
}

/// Diffusion coefficient sigma(t, x) as a d x d matrix.
#[derive(Clone)]
pub enum Diffusion {
    Constant(Matrix),
    Custom(MatrixField),
}

impl Diffusion {
    /// out = sigma(t, x) . v
    pub fn apply(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Constant(m) => m.mul_vec_into(v, out),
            Diffusion::Custom(f) => f(t, x).mul_vec_into(v, out),
        }
    }

    /// out = sigma(t, x)^T . v
    pub fn apply_transpose(&self, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Constant(m) => m.tr_mul_vec_into(v, out),
            Diffusion::Custom(f) => f(t, x).tr_mul_vec_into(v, out),
        }
    }

    pub fn matrix_at(&self, t: f64, x: &[f64]) -> Matrix {
        match self {
            Diffusion::Constant(m) => m.clone(),
            Diffusion::Custom(f) => f(t, x),
        }
    }
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Constant(m) => write!(f, "Diffusion::Constant({}x{})", m.rows, m.cols),
            Diffusion::Custom(_) => write!(f, "Diffusion::Custom"),
        }
    }
}

/// Jump coefficient beta(t, x, e) mapping a mark to a state displacement.
#[derive(Clone)]
pub enum JumpCoeff {
    /// beta(t, x, e) = e; requires mark dimension = state dimension.
    MarkIdentity,
    Custom(JumpField),
}

impl JumpCoeff {
    pub fn eval(&self, t: f64, x: &[f64], mark: &[f64]) -> Vec<f64> {
        match self {
            JumpCoeff::MarkIdentity => mark.to_vec(),
            JumpCoeff::Custom(f) => f(t, x, mark),
        }
    }
}

impl fmt::Debug for JumpCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpCoeff::MarkIdentity => write!(f, "JumpCoeff::MarkIdentity"),
            JumpCoeff::Custom(_) => write!(f, "JumpCoeff::Custom"),
        }
    }
}

/// Partial derivatives of the driver w.r.t. its (y, z, Gamma) arguments,
/// used by backprop through the one-step regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPartials {
    pub dy: f64,
    pub dz: Vec<f64>,
    pub dgamma: f64,
}

/// The generator f(t, x, y, z, Gamma) of the backward equation.
pub trait Driver: Send + Sync {
    fn value(&self, t: f64, x: &[f64], y: f64, z: &[f64], gamma: f64) -> f64;

    /// Analytic partials w.r.t. (y, z, Gamma) at the same point.
    fn partials(&self, t: f64, x: &[f64], y: f64, z: &[f64], gamma: f64) -> DriverPartials;
}

/// Driver constant in all arguments (the quadratic-terminal benchmarks).
#[derive(Debug, Clone)]
pub struct ConstantDriver(pub f64);

impl Driver for ConstantDriver {
    fn value(&self, _t: f64, _x: &[f64], _y: f64, _z: &[f64], _gamma: f64) -> f64 {
        self.0
    }

    fn partials(&self, _t: f64, _x: &[f64], _y: f64, z: &[f64], _gamma: f64) -> DriverPartials {
        DriverPartials { dy: 0.0, dz: vec![0.0; z.len()], dgamma: 0.0 }
    }
}

/// Known solution fields for benchmarks with a closed-form answer.
#[derive(Clone)]
pub struct ExactSolution {
    /// u(t, x)
    pub u: ScalarField,
    /// grad_x u(t, x)
    pub grad_u: VectorField,
    /// The weighted nonlocal term Gamma(t, x).
    pub gamma: ScalarField,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExactSolution")
    }
}

/// Full description of one forward-backward problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub horizon: f64,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub jump: JumpCoeff,
    pub driver: Arc<dyn Driver>,
    pub terminal: TerminalFn,
    pub levy: LevyModel,
    pub x0: Vec<f64>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("drift", &self.drift)
            .field("diffusion", &self.diffusion)
            .field("jump", &self.jump)
            .field("levy", &self.levy)
            .field("x0", &self.x0)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Check internal consistency: dimensions line up and, when an exact
    /// solution is attached, it matches the terminal condition at sampled
    /// points around the start state.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("state dimension must be >= 1"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if self.x0.len() != self.dim {
            return Err(Error::invalid(format!(
                "start state has dimension {}, problem has dimension {}",
                self.x0.len(),
                self.dim
            )));
        }
        if matches!(self.jump, JumpCoeff::MarkIdentity) && self.levy.mark_dim() != self.dim {
            return Err(Error::invalid(format!(
                "identity jump coefficient needs mark dimension {} to match state dimension {}",
                self.levy.mark_dim(),
                self.dim
            )));
        }
        if let Some(exact) = &self.exact {
            for shift in [-0.5, 0.0, 0.25, 1.0] {
                let x: Vec<f64> = self.x0.iter().map(|v| v + shift).collect();
                let terminal = (self.terminal)(&x);
                let u_at_horizon = (exact.u)(self.horizon, &x);
                if (terminal - u_at_horizon).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "exact solution disagrees with terminal condition at {x:?}: \
                         {u_at_horizon} vs {terminal}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// intensity * E_rho[beta(t, x, .)], the drift correction that
    /// compensates the jump part. Closed form for the identity coefficient.
    pub fn jump_compensator(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        match &self.jump {
            JumpCoeff::MarkIdentity => {
                let mean = self.levy.mark_mean();
                Ok(mean.iter().map(|m| self.levy.intensity() * m).collect())
            }
            JumpCoeff::Custom(beta) => {
                let rule = self.levy.default_rule();
                let mut out = vec![0.0; self.dim];
                for (l, slot) in out.iter_mut().enumerate() {
                    *slot = self.levy.compensator_integral(|e| beta(t, x, e)[l], &rule)?;
                }
                Ok(out)
            }
        }
    }
}

/// One Euler step with compensated jumps:
/// `x + b dt + sigma dw + sum_k beta(marks[k]) - dt * intensity * E[beta]`.
pub fn euler_step(
    problem: &ProblemSpec,
    t: f64,
    dt: f64,
    x: &[f64],
    dw: &[f64],
    marks: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("euler step needs dt > 0, got {dt}")));
    }
    let comp = problem.jump_compensator(t, x)?;
    let mut out = vec![0.0; problem.dim];
    euler_step_into(problem, t, dt, x, dw, marks, &comp, &mut out)?;
    Ok(out)
}

/// In-place stepping core shared by `euler_step` and `simulate_batch`, so a
/// stored transition is bit-reproducible through either entry point.
#[allow(clippy::too_many_arguments)]
fn euler_step_into(
    problem: &ProblemSpec,
    t: f64,
    dt: f64,
    x: &[f64],
    dw: &[f64],
    marks: &[Vec<f64>],
    compensator: &[f64],
    out: &mut [f64],
) -> Result<()> {
    problem.diffusion.apply(t, x, dw, out);
    if !problem.drift.is_zero() {
        let b = problem.drift.eval(t, x);
        for (o, bl) in out.iter_mut().zip(&b) {
            *o += bl * dt;
        }
    }
    for (o, (xl, c)) in out.iter_mut().zip(x.iter().zip(compensator)) {
        *o += xl - dt * c;
    }
    match &problem.jump {
        JumpCoeff::MarkIdentity => {
            for mark in marks {
                for (o, e) in out.iter_mut().zip(mark) {
                    *o += e;
                }
            }
        }
        JumpCoeff::Custom(beta) => {
            for mark in marks {
                let jump = beta(t, x, mark);
                for (o, j) in out.iter_mut().zip(&jump) {
                    *o += j;
                }
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite state after euler step at t = {t}")));
    }
    Ok(())
}

/// Simulated forward paths: states, Brownian increments, and jump marks for
/// every sample and interval, stored flat and immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    grid: TimeGrid,
    n_samples: usize,
    dim: usize,
    x: Vec<f64>,
    dw: Vec<f64>,
    jumps: Vec<Vec<Vec<f64>>>,
}

impl PathBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// State of sample `m` at knot `i` (i in 0..=N).
    #[inline]
    pub fn state(&self, m: usize, i: usize) -> &[f64] {
        let stride = (self.grid.n_steps() + 1) * self.dim;
        let base = m * stride + i * self.dim;
        &self.x[base..base + self.dim]
    }

    /// Brownian increment of sample `m` over interval `i` (i in 0..N).
    #[inline]
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let stride = self.grid.n_steps() * self.dim;
        let base = m * stride + i * self.dim;
        &self.dw[base..base + self.dim]
    }

    /// Jump marks of sample `m` realized in interval `i`.
    #[inline]
    pub fn marks(&self, m: usize, i: usize) -> &[Vec<f64>] {
        &self.jumps[m * self.grid.n_steps() + i]
    }

    pub fn jump_count(&self, m: usize, i: usize) -> usize {
        self.marks(m, i).len()
    }
}

/// Simulate `m_samples` independent paths on `grid`.
///
/// The random stream of sample `m`, interval `i` is derived from
/// `(master, base_tags..., m, i)`, so the batch is identical for any worker
/// count and any evaluation order.
pub fn simulate_batch(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    m_samples: usize,
    master: u64,
    base_tags: &[u64],
) -> Result<PathBatch> {
    if m_samples == 0 {
        return Err(Error::invalid("batch needs at least one sample"));
    }
    let d = problem.dim;
    let n = grid.n_steps();
    // The identity jump coefficient has a state-independent compensator;
    // hoist it so the per-step work is pure arithmetic.
    let fixed_comp = match &problem.jump {
        JumpCoeff::MarkIdentity => Some(problem.jump_compensator(0.0, &problem.x0)?),
        JumpCoeff::Custom(_) => None,
    };

    struct SamplePath {
        x: Vec<f64>,
        dw: Vec<f64>,
        jumps: Vec<Vec<Vec<f64>>>,
    }

    let simulate_one = |m: usize| -> Result<SamplePath> {
        let mut x = vec![0.0; (n + 1) * d];
        let mut dw = vec![0.0; n * d];
        let mut jumps = Vec::with_capacity(n);
        x[..d].copy_from_slice(&problem.x0);
        for i in 0..n {
            let mut tags = Vec::with_capacity(base_tags.len() + 2);
            tags.extend_from_slice(base_tags);
            tags.push(m as u64);
            tags.push(i as u64);
            let mut rng = derive_stream(master, &tags);
            let (t, dt) = (grid.knot(i), grid.dt(i));
            let sqrt_dt = dt.sqrt();
            for k in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                dw[i * d + k] = sqrt_dt * z;
            }
            let marks = problem.levy.sample_jump_marks(dt, &mut rng)?;
            let comp_owned;
            let comp = match &fixed_comp {
                Some(c) => c.as_slice(),
                None => {
                    comp_owned = problem.jump_compensator(t, &x[i * d..(i + 1) * d])?;
                    comp_owned.as_slice()
                }
            };
            let (prev, next) = x.split_at_mut((i + 1) * d);
            let xi = &prev[i * d..];
            euler_step_into(
                problem,
                t,
                dt,
                xi,
                &dw[i * d..(i + 1) * d],
                &marks,
                comp,
                &mut next[..d],
            )
            .map_err(|e| Error::numeric(format!("sample {m}: {e}")))?;
            jumps.push(marks);
        }
        Ok(SamplePath { x, dw, jumps })
    };

    let per_sample: Vec<SamplePath> =
        (0..m_samples).into_par_iter().map(simulate_one).collect::<Result<Vec<_>>>()?;

    let mut x = Vec::with_capacity(m_samples * (n + 1) * d);
    let mut dw = Vec::with_capacity(m_samples * n * d);
    let mut jumps = Vec::with_capacity(m_samples * n);
    for sample in per_sample {
        x.extend_from_slice(&sample.x);
        dw.extend_from_slice(&sample.dw);
        jumps.extend(sample.jumps);
    }
    Ok(PathBatch { grid: grid.clone(), n_samples: m_samples, dim: d, x, dw, jumps })
}
