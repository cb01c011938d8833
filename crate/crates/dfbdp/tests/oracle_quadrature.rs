//! Independent Monte-Carlo oracles for the quadrature rules: every
//! compensator and weighted-jump integral used by the solver must agree
//! with brute-force sampling of the mark distribution.

use dfbdp::levy::{LevyModel, MarkDistribution};
use dfbdp::rng::{derive_stream, purpose};

const MC_SAMPLES: usize = 10_000_000;

/// Streaming Monte-Carlo estimate of `E[kernel(e)]` with its standard error.
fn mc_oracle(model: &LevyModel, kernel: impl Fn(&[f64]) -> f64, tag: u64) -> (f64, f64) {
    let mut rng = derive_stream(0x0cac1e, &[purpose::ORACLE, tag]);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..MC_SAMPLES {
        let mark = model.sample_mark(&mut rng);
        let v = kernel(&mark);
        sum += v;
        sum_sq += v * v;
    }
    let n = MC_SAMPLES as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn continuous_distributions() -> Vec<(&'static str, MarkDistribution)> {
    vec![
        ("uniform", MarkDistribution::Uniform { half_width: 0.7 }),
        ("normal", MarkDistribution::Normal { mean: 0.4, std_dev: 0.25 }),
        ("exponential", MarkDistribution::Exponential { rate: 3.0 }),
    ]
}

type Kernel = (String, Box<dyn Fn(&[f64]) -> f64>);

fn benchmark_kernels() -> Vec<Kernel> {
    let mut kernels: Vec<Kernel> = vec![
        ("1".to_string(), Box::new(|_: &[f64]| 1.0)),
        ("e".to_string(), Box::new(|e: &[f64]| e[0])),
        ("e^2".to_string(), Box::new(|e: &[f64]| e[0] * e[0])),
    ];
    for x0 in [0.0, std::f64::consts::FRAC_PI_2, 1.0] {
        kernels.push((format!("sin({x0}+e)"), Box::new(move |e: &[f64]| (x0 + e[0]).sin())));
    }
    kernels
}

#[test]
fn default_rules_match_monte_carlo_oracle() {
    for (d_idx, (name, dist)) in continuous_distributions().into_iter().enumerate() {
        let model = LevyModel::new(1.0, dist).unwrap();
        let rule = model.default_rule();
        for (k_idx, (label, kernel)) in benchmark_kernels().into_iter().enumerate() {
            let quad = model.compensator_integral(&kernel, &rule).unwrap();
            let tag = (d_idx * 100 + k_idx) as u64;
            let (mc, stderr) = mc_oracle(&model, &kernel, tag);
            // Floor the band for constant integrands, whose MC variance is
            // exactly zero; only round-off separates the two values then.
            let band = (3.0 * stderr).max(1e-12);
            assert!(
                (quad - mc).abs() <= band,
                "{name}, kernel {label}: quadrature {quad} vs MC {mc} (stderr {stderr})"
            );
        }
    }
}

#[test]
fn discrete_rules_are_exact() {
    // Bernoulli and point-mass rules enumerate the support; no sampling
    // error is tolerated.
    let bern =
        LevyModel::new(1.0, MarkDistribution::Bernoulli { low: -0.4, high: 0.8, prob_low: 0.5 })
            .unwrap();
    let rule = bern.default_rule();
    for (label, kernel) in benchmark_kernels() {
        let quad = bern.compensator_integral(&kernel, &rule).unwrap();
        let exact = 0.5 * kernel(&[-0.4]) + 0.5 * kernel(&[0.8]);
        assert!((quad - exact).abs() < 1e-14, "bernoulli, kernel {label}: {quad} vs {exact}");
    }

    let point = LevyModel::new(0.3, MarkDistribution::PointMass { value: vec![0.1] }).unwrap();
    let rule = point.default_rule();
    let quad = point.compensator_integral(|e: &[f64]| e[0] * e[0], &rule).unwrap();
    assert!((quad - 0.3 * 0.01).abs() < 1e-16);
}

#[test]
fn gamma_weighted_integral_matches_oracle_with_custom_weight() {
    // gamma(e) = e^2 against the uniform marks; oracle = E[e^2 * kernel(e)].
    use dfbdp::levy::GammaWeight;
    let model = LevyModel::with_gamma(
        1.0,
        MarkDistribution::Uniform { half_width: 0.7 },
        GammaWeight::custom(|e: &[f64]| e[0] * e[0], 0.49),
    )
    .unwrap();
    let rule = model.default_rule();
    let kernel = |e: &[f64]| (1.0 + e[0]).sin();
    let quad = model.gamma_weighted_integral(kernel, &rule).unwrap();
    let (mc, stderr) = mc_oracle(&model, |e: &[f64]| e[0] * e[0] * (1.0 + e[0]).sin(), 999);
    assert!(
        (quad - mc).abs() <= 3.0 * stderr,
        "weighted integral {quad} vs MC {mc} (stderr {stderr})"
    );
}
