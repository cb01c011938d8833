//! Compound-Poisson jump models: the measure `intensity * rho(e) de`, mark
//! sampling, and compensator integrals evaluated exactly or by quadrature.
//!
//! All benchmark measures have finite intensity, so a jump draw over an
//! interval is a Poisson count plus i.i.d. marks. Marks are always stored as
//! vectors so scalar-mark models and the d-dimensional point-mass model share
//! one path record type.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Distribution of a single jump mark.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkDistribution {
    /// Gaussian mark with the given mean and standard deviation.
    Normal { mean: f64, std_dev: f64 },
    /// Uniform mark on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Exponential mark on `[0, inf)` with the given rate.
    Exponential { rate: f64 },
    /// Two-point mark: `low` with probability `prob_low`, else `high`.
    Bernoulli { low: f64, high: f64, prob_low: f64 },
    /// Deterministic vector mark (constant jump in every coordinate).
    PointMass { value: Vec<f64> },
}

impl MarkDistribution {
    /// Dimension of a mark drawn from this distribution.
    pub fn mark_dim(&self) -> usize {
        match self {
            MarkDistribution::PointMass { value } => value.len(),
            _ => 1,
        }
    }

    /// True when the support is a finite set of points.
    pub fn is_discrete(&self) -> bool {
        matches!(self, MarkDistribution::Bernoulli { .. } | MarkDistribution::PointMass { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            MarkDistribution::Normal { std_dev, .. } => {
                if *std_dev <= 0.0 {
                    return Err(Error::invalid("normal mark std_dev must be positive"));
                }
            }
            MarkDistribution::Uniform { half_width } => {
                if *half_width <= 0.0 {
                    return Err(Error::invalid("uniform mark half_width must be positive"));
                }
            }
            MarkDistribution::Exponential { rate } => {
                if *rate <= 0.0 {
                    return Err(Error::invalid("exponential mark rate must be positive"));
                }
            }
            MarkDistribution::Bernoulli { prob_low, .. } => {
                if !(0.0..=1.0).contains(prob_low) {
                    return Err(Error::invalid("bernoulli mark probability must lie in [0, 1]"));
                }
            }
            MarkDistribution::PointMass { value } => {
                if value.is_empty() {
                    return Err(Error::invalid("point-mass mark must have dimension >= 1"));
                }
            }
        }
        Ok(())
    }
}

/// Scalar function of a jump mark, `e -> r`.
pub type MarkFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Bounded weight `gamma(e)` applied inside the nonlocal integral operator.
#[derive(Clone)]
pub struct GammaWeight {
    func: Option<MarkFn>,
    bound: f64,
}

impl GammaWeight {
    /// The constant weight 1 (the benchmark default).
    pub fn one() -> Self {
        GammaWeight { func: None, bound: 1.0 }
    }

    /// A custom weight together with its sup-norm bound.
    pub fn custom(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, bound: f64) -> Self {
        GammaWeight { func: Some(Arc::new(f)), bound }
    }

    #[inline]
    pub fn eval(&self, mark: &[f64]) -> f64 {
        match &self.func {
            None => 1.0,
            Some(f) => f(mark),
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_unit(&self) -> bool {
        self.func.is_none()
    }
}

impl fmt::Debug for GammaWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.func {
            None => write!(f, "GammaWeight::one"),
            Some(_) => write!(f, "GammaWeight::custom(bound={})", self.bound),
        }
    }
}

/// A finite-intensity Lévy measure `intensity * rho(e) de` with a bounded
/// weight function for the nonlocal operator.
#[derive(Debug, Clone)]
pub struct LevyModel {
    intensity: f64,
    mark_dist: MarkDistribution,
    gamma_weight: GammaWeight,
}

impl LevyModel {
    /// Build a model with the default unit gamma weight.
    ///
    /// `intensity = 0` is allowed and turns every jump and compensator term
    /// off, degenerating the forward scheme to plain Euler-Maruyama.
    pub fn new(intensity: f64, mark_dist: MarkDistribution) -> Result<Self> {
        Self::with_gamma(intensity, mark_dist, GammaWeight::one())
    }

    pub fn with_gamma(
        intensity: f64,
        mark_dist: MarkDistribution,
        gamma_weight: GammaWeight,
    ) -> Result<Self> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::invalid("jump intensity must be finite and nonnegative"));
        }
        mark_dist.validate()?;
        Ok(LevyModel { intensity, mark_dist, gamma_weight })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn mark_dist(&self) -> &MarkDistribution {
        &self.mark_dist
    }

    pub fn gamma_weight(&self) -> &GammaWeight {
        &self.gamma_weight
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dist.mark_dim()
    }

    /// Closed-form mean of the mark distribution.
    pub fn mark_mean(&self) -> Vec<f64> {
        match &self.mark_dist {
            MarkDistribution::Normal { mean, .. } => vec![*mean],
            MarkDistribution::Uniform { .. } => vec![0.0],
            MarkDistribution::Exponential { rate } => vec![1.0 / rate],
            MarkDistribution::Bernoulli { low, high, prob_low } => {
                vec![prob_low * low + (1.0 - prob_low) * high]
            }
            MarkDistribution::PointMass { value } => value.clone(),
        }
    }

    /// Draw the jump marks realized over an interval of length `dt`:
    /// a Poisson(intensity*dt) count followed by that many i.i.d. marks.
    pub fn sample_jump_marks<R: Rng>(&self, dt: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("jump sampling needs dt > 0, got {dt}")));
        }
        let count = poisson_inversion(self.intensity * dt, rng);
        let mut marks = Vec::with_capacity(count);
        for _ in 0..count {
            marks.push(self.sample_mark(rng));
        }
        Ok(marks)
    }

    /// Draw one mark.
    pub fn sample_mark<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.mark_dist {
            MarkDistribution::Normal { mean, std_dev } => {
                let z: f64 = StandardNormal.sample(rng);
                vec![mean + std_dev * z]
            }
            MarkDistribution::Uniform { half_width } => {
                let u: f64 = rng.random();
                vec![half_width * (2.0 * u - 1.0)]
            }
            MarkDistribution::Exponential { rate } => {
                let u: f64 = rng.random();
                vec![-(1.0 - u).ln() / rate]
            }
            MarkDistribution::Bernoulli { low, high, prob_low } => {
                let u: f64 = rng.random();
                vec![if u < *prob_low { *low } else { *high }]
            }
            MarkDistribution::PointMass { value } => value.clone(),
        }
    }

    /// The default quadrature rule for this model: exact sums for discrete
    /// marks, 32-node Gauss rules matched to the density otherwise.
    pub fn default_rule(&self) -> QuadratureRule {
        self.quadrature_rule(DEFAULT_QUAD_NODES)
    }

    /// Quadrature rule with a chosen node count (ignored for discrete marks).
    pub fn quadrature_rule(&self, nodes: usize) -> QuadratureRule {
        match &self.mark_dist {
            MarkDistribution::Normal { mean, std_dev } => {
                let (x, w) = gauss_hermite(nodes);
                let sqrt_pi = std::f64::consts::PI.sqrt();
                let nodes = x
                    .iter()
                    .map(|&t| vec![mean + std::f64::consts::SQRT_2 * std_dev * t])
                    .collect();
                let weights = w.iter().map(|&wi| wi / sqrt_pi).collect();
                QuadratureRule::new(RuleKind::GaussHermite, nodes, weights)
            }
            MarkDistribution::Uniform { half_width } => {
                let (x, w) = gauss_legendre(nodes);
                let nodes = x.iter().map(|&t| vec![half_width * t]).collect();
                let weights = w.iter().map(|&wi| wi / 2.0).collect();
                QuadratureRule::new(RuleKind::GaussLegendre, nodes, weights)
            }
            MarkDistribution::Exponential { rate } => {
                let (x, w) = gauss_laguerre(nodes);
                let nodes = x.iter().map(|&t| vec![t / rate]).collect();
                QuadratureRule::new(RuleKind::GaussLaguerre, nodes, w)
            }
            MarkDistribution::Bernoulli { low, high, prob_low } => QuadratureRule::new(
                RuleKind::ExactDiscrete,
                vec![vec![*low], vec![*high]],
                vec![*prob_low, 1.0 - prob_low],
            ),
            MarkDistribution::PointMass { value } => {
                QuadratureRule::new(RuleKind::ExactDiscrete, vec![value.clone()], vec![1.0])
            }
        }
    }

    /// Monte-Carlo "rule": `n` sampled marks with equal weights. Used as the
    /// independent oracle against the Gauss rules.
    pub fn monte_carlo_rule<R: Rng>(&self, n: usize, rng: &mut R) -> QuadratureRule {
        let nodes: Vec<Vec<f64>> = (0..n).map(|_| self.sample_mark(rng)).collect();
        let w = 1.0 / n as f64;
        QuadratureRule::new(RuleKind::MonteCarlo, nodes, vec![w; n])
    }

    /// `intensity * E_rho[kernel(e)]`, i.e. the integral of the kernel
    /// against the Lévy measure, evaluated with the given rule.
    pub fn compensator_integral(
        &self,
        kernel: impl Fn(&[f64]) -> f64,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        let mut acc = 0.0;
        for (node, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = kernel(node);
            if !v.is_finite() {
                return Err(Error::numeric(format!(
                    "kernel returned {v} at quadrature node {node:?}"
                )));
            }
            acc += w * v;
        }
        Ok(self.intensity * acc)
    }

    /// As `compensator_integral` with the kernel multiplied by `gamma(e)`;
    /// this is the weighted nonlocal term fed to the driver.
    pub fn gamma_weighted_integral(
        &self,
        kernel: impl Fn(&[f64]) -> f64,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        if self.gamma_weight.is_unit() {
            return self.compensator_integral(kernel, rule);
        }
        let gamma = self.gamma_weight.clone();
        self.compensator_integral(|e| gamma.eval(e) * kernel(e), rule)
    }
}

/// Default node count for the continuous Gauss rules.
pub const DEFAULT_QUAD_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    ExactDiscrete,
    GaussLegendre,
    GaussHermite,
    GaussLaguerre,
    MonteCarlo,
}

/// Nodes and weights discretizing `E_rho[.]`; weights sum to 1 whenever the
/// rule integrates the mark density exactly or in expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(kind: RuleKind, nodes: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(nodes.len(), weights.len());
        QuadratureRule { kind, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Poisson sampling by CDF inversion; exact for the small means used here.
pub fn poisson_inversion<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let mut k = 0usize;
    let mut p = (-mean).exp();
    let mut cdf = p;
    // Cap guards against pathological means where p underflows.
    let cap = (mean + 10.0 * mean.sqrt() + 50.0) as usize;
    while u > cdf && k < cap {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

// ---------------------------------------------------------------------------
// Gauss rule construction (Newton iteration on the orthogonal-polynomial
// recurrences). Node counts in the tens converge to ~1e-15 in a few steps.
// ---------------------------------------------------------------------------

const NEWTON_EPS: f64 = 3e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..NEWTON_MAX_ITERS {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z_old = z;
            z = z_old - p1 / pp;
            if (z - z_old).abs() <= NEWTON_EPS {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Nodes and weights of the n-point Gauss-Hermite rule (weight exp(-x^2)).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let pi_qrt = std::f64::consts::PI.powf(-0.25);
    let mut z = 0.0;
    for i in 0..m {
        // Initial guesses from largest root inward.
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..NEWTON_MAX_ITERS {
            // Orthonormal Hermite recurrence keeps values bounded.
            let mut p1 = pi_qrt;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z_old = z;
            z = z_old - p1 / pp;
            if (z - z_old).abs() <= NEWTON_EPS {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Largest roots first above; store ascending for readability.
    x.reverse();
    w.reverse();
    (x, w)
}

/// Nodes and weights of the n-point Gauss-Laguerre rule (weight exp(-x)).
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - x[i - 2])
            }
        };
        let mut pp = 0.0;
        let mut p2 = 0.0;
        for _ in 0..NEWTON_MAX_ITERS {
            let mut p1 = 1.0;
            p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (p1 - p2) / z;
            let z_old = z;
            z = z_old - p1 / pp;
            if (z - z_old).abs() <= NEWTON_EPS * z.max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = -1.0 / (pp * nf * p2);
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, purpose};

    fn weight_sum(rule: &QuadratureRule) -> f64 {
        rule.weights.iter().sum()
    }

    #[test]
    fn weights_normalized_and_nonnegative() {
        let models = [
            LevyModel::new(1.0, MarkDistribution::Normal { mean: 0.4, std_dev: 0.25 }).unwrap(),
            LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap(),
            LevyModel::new(1.0, MarkDistribution::Exponential { rate: 3.0 }).unwrap(),
            LevyModel::new(
                1.0,
                MarkDistribution::Bernoulli { low: -0.4, high: 0.8, prob_low: 0.5 },
            )
            .unwrap(),
            LevyModel::new(0.3, MarkDistribution::PointMass { value: vec![0.1; 4] }).unwrap(),
        ];
        for model in &models {
            let rule = model.default_rule();
            assert!((weight_sum(&rule) - 1.0).abs() < 1e-12, "kind {:?}", rule.kind);
            assert!(rule.weights.iter().all(|&w| w >= 0.0), "kind {:?}", rule.kind);
        }
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree-14 monomial is within the exactness degree (2n-1 = 15)
        let quad: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(14)).sum();
        assert!((quad - 2.0 / 15.0).abs() < 1e-13);
        let odd: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(7)).sum();
        assert!(odd.abs() < 1e-14);
    }

    #[test]
    fn hermite_moments_match_gaussian() {
        // E[e^2] under exp(-x^2)/sqrt(pi) is 1/2; E[e^4] is 3/4.
        let (x, w) = gauss_hermite(16);
        let norm = std::f64::consts::PI.sqrt();
        let m2: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi * xi).sum::<f64>() / norm;
        let m4: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(4)).sum::<f64>() / norm;
        assert!((m2 - 0.5).abs() < 1e-13);
        assert!((m4 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn laguerre_moments_match_exponential() {
        // Gamma-function moments under exp(-x): E[x^k] = k!.
        let (x, w) = gauss_laguerre(16);
        for (k, expect) in [(1usize, 1.0f64), (2, 2.0), (3, 6.0), (4, 24.0)] {
            let mk: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(k as i32)).sum();
            assert!((mk - expect).abs() < 1e-10 * expect.max(1.0), "k={k}: {mk}");
        }
    }

    #[test]
    fn compensator_of_unit_kernel_is_intensity() {
        let model = LevyModel::new(2.5, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let rule = model.default_rule();
        let v = model.compensator_integral(|_| 1.0, &rule).unwrap();
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn compensator_of_identity_kernel_is_mean() {
        let model =
            LevyModel::new(1.0, MarkDistribution::Normal { mean: 0.4, std_dev: 0.25 }).unwrap();
        let rule = model.default_rule();
        let v = model.compensator_integral(|e| e[0], &rule).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn uniform_shifted_sine_kernel_closed_form() {
        // E[sin(pi/2 + e) - sin(pi/2)] over U(-0.7, 0.7) is sin(0.7)/0.7 - 1.
        let model = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let rule = model.default_rule();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let v =
            model.compensator_integral(|e| (half_pi + e[0]).sin() - half_pi.sin(), &rule).unwrap();
        let expect = (0.7f64).sin() / 0.7 - 1.0;
        assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn bernoulli_rule_is_exact_two_point_expectation() {
        let model = LevyModel::new(
            1.0,
            MarkDistribution::Bernoulli { low: -0.4, high: 0.8, prob_low: 0.5 },
        )
        .unwrap();
        let rule = model.default_rule();
        let v = model.compensator_integral(|e| e[0], &rule).unwrap();
        assert_eq!(v, 0.5 * (-0.4) + 0.5 * 0.8);
    }

    #[test]
    fn gamma_weight_defaults_to_compensator() {
        let model = LevyModel::new(1.3, MarkDistribution::Exponential { rate: 3.0 }).unwrap();
        let rule = model.default_rule();
        let a = model.compensator_integral(|e| e[0] * e[0], &rule).unwrap();
        let b = model.gamma_weighted_integral(|e| e[0] * e[0], &rule).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn custom_gamma_weight_applies_pointwise() {
        let model = LevyModel::with_gamma(
            1.0,
            MarkDistribution::Bernoulli { low: -0.4, high: 0.8, prob_low: 0.5 },
            GammaWeight::custom(|e| if e[0] > 0.0 { 0.5 } else { 1.0 }, 1.0),
        )
        .unwrap();
        let rule = model.default_rule();
        let v = model.gamma_weighted_integral(|e| e[0], &rule).unwrap();
        assert!((v - (0.5 * (-0.4) + 0.5 * 0.5 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn zero_kernel_integrates_to_zero() {
        let model = LevyModel::new(4.0, MarkDistribution::Exponential { rate: 3.0 }).unwrap();
        let rule = model.default_rule();
        assert_eq!(model.gamma_weighted_integral(|_| 0.0, &rule).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_kernel_reports_node() {
        let model = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let rule = model.default_rule();
        let err = model.compensator_integral(|e| 1.0 / (e[0] - e[0]), &rule).unwrap_err();
        assert!(matches!(err, Error::NumericFailure(_)), "{err}");
    }

    #[test]
    fn mark_mean_closed_forms() {
        let exp = LevyModel::new(1.0, MarkDistribution::Exponential { rate: 3.0 }).unwrap();
        assert!((exp.mark_mean()[0] - 1.0 / 3.0).abs() < 1e-15);
        let uni = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        assert_eq!(uni.mark_mean()[0], 0.0);
        let ber = LevyModel::new(
            1.0,
            MarkDistribution::Bernoulli { low: -0.4, high: 0.8, prob_low: 0.5 },
        )
        .unwrap();
        assert!((ber.mark_mean()[0] - 0.2).abs() < 1e-15);
        let pm =
            LevyModel::new(0.3, MarkDistribution::PointMass { value: vec![0.1, 0.1] }).unwrap();
        assert_eq!(pm.mark_mean(), vec![0.1, 0.1]);
    }

    #[test]
    fn point_mass_marks_are_constant() {
        let model =
            LevyModel::new(5.0, MarkDistribution::PointMass { value: vec![0.1; 3] }).unwrap();
        let mut rng = derive_stream(1, &[purpose::ORACLE, 0]);
        let marks = model.sample_jump_marks(2.0, &mut rng).unwrap();
        assert!(!marks.is_empty());
        for m in marks {
            assert_eq!(m, vec![0.1; 3]);
        }
    }

    #[test]
    fn jump_count_matches_poisson_mean() {
        let model = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let mut rng = derive_stream(2, &[purpose::ORACLE, 1]);
        let dt = 1.0 / 30.0;
        let trials = 100_000;
        let mut total = 0usize;
        for _ in 0..trials {
            total += model.sample_jump_marks(dt, &mut rng).unwrap().len();
        }
        let mean = total as f64 / trials as f64;
        let expect = dt;
        assert!((mean - expect).abs() < 0.05 * expect, "{mean} vs {expect}");
    }

    #[test]
    fn uniform_mark_sample_mean_near_zero() {
        let model = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let mut rng = derive_stream(3, &[purpose::ORACLE, 2]);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += model.sample_mark(&mut rng)[0];
        }
        assert!((sum / n as f64).abs() < 0.003);
    }

    #[test]
    fn invalid_dt_rejected() {
        let model = LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.7 }).unwrap();
        let mut rng = derive_stream(4, &[0]);
        assert!(model.sample_jump_marks(0.0, &mut rng).is_err());
        assert!(model.sample_jump_marks(-0.5, &mut rng).is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(LevyModel::new(-1.0, MarkDistribution::Uniform { half_width: 0.7 }).is_err());
        assert!(LevyModel::new(1.0, MarkDistribution::Uniform { half_width: 0.0 }).is_err());
        assert!(LevyModel::new(1.0, MarkDistribution::Exponential { rate: -3.0 }).is_err());
        assert!(LevyModel::new(
            1.0,
            MarkDistribution::Bernoulli { low: 0.0, high: 1.0, prob_low: 1.5 }
        )
        .is_err());
    }
}
