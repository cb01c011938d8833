//! One-hidden-layer tanh networks with exact analytic gradients.
//!
//! Both the per-step solution nets and the jump-kernel nets share this shape:
//! `x -> w2 * tanh(w1 * x + b1) + b2` with scalar output. Training needs
//! parameter gradients of many forwards of the same net at different points,
//! so the hot path splits into a forward that caches the hidden activations
//! and a backprop that reuses them once the loss residual is known.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar-output multilayer perceptron with one tanh hidden layer.
///
/// `w1` is stored row-major (`hidden` rows of `in_dim`), `w2` is the single
/// output row. The output is affine in `(w2, b2)` for a fixed hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub in_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpNet {
    pub fn new(
        in_dim: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if in_dim == 0 || hidden == 0 {
            return Err(Error::invalid("network dimensions must be >= 1"));
        }
        if w1.len() != hidden * in_dim || b1.len() != hidden || w2.len() != hidden {
            return Err(Error::invalid(format!(
                "parameter shapes do not match in_dim={in_dim}, hidden={hidden}"
            )));
        }
        Ok(MlpNet { in_dim, hidden, w1, b1, w2, b2 })
    }

    /// All-zero parameters (constant zero function).
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        MlpNet {
            in_dim,
            hidden,
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`), zero biases.
    pub fn glorot<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = MlpNet::zeros(in_dim, hidden);
        let lim1 = (6.0 / (in_dim + hidden) as f64).sqrt();
        for w in &mut net.w1 {
            *w = lim1 * (2.0 * rng.random::<f64>() - 1.0);
        }
        let lim2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut net.w2 {
            *w = lim2 * (2.0 * rng.random::<f64>() - 1.0);
        }
        net
    }

    pub fn num_params(&self) -> usize {
        self.hidden * self.in_dim + 2 * self.hidden + 1
    }

    /// Evaluate the network at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.in_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut acts = vec![0.0; self.hidden];
        Ok(self.forward_cached(x, &mut acts))
    }

    /// Evaluate at `x`, writing the hidden tanh activations into `acts` so a
    /// later [`MlpNet::backprop_cached`] can reuse them. Hot-path variant:
    /// dimensions are checked only in debug builds.
    #[inline]
    pub fn forward_cached(&self, x: &[f64], acts: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(acts.len(), self.hidden);
        let mut out = self.b2;
        for (j, slot) in acts.iter_mut().enumerate() {
            let row = &self.w1[j * self.in_dim..(j + 1) * self.in_dim];
            let mut pre = self.b1[j];
            for (w, xi) in row.iter().zip(x) {
                pre += w * xi;
            }
            let a = pre.tanh();
            *slot = a;
            out += self.w2[j] * a;
        }
        out
    }

    /// Accumulate the gradient of `upstream * forward(x)` w.r.t. all
    /// parameters into `grad`, reusing activations cached by
    /// [`MlpNet::forward_cached`] at the same `x`.
    #[inline]
    pub fn backprop_cached(&self, x: &[f64], acts: &[f64], upstream: f64, grad: &mut NetGrad) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(acts.len(), self.hidden);
        grad.b2 += upstream;
        for (j, &a) in acts.iter().enumerate() {
            grad.w2[j] += upstream * a;
            // d tanh = 1 - tanh^2
            let delta = upstream * self.w2[j] * (1.0 - a * a);
            grad.b1[j] += delta;
            let row = &mut grad.w1[j * self.in_dim..(j + 1) * self.in_dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += delta * xi;
            }
        }
    }

    /// Gradient of `upstream * forward(x)` w.r.t. all parameters.
    pub fn grad_params(&self, x: &[f64], upstream: f64) -> Result<NetGrad> {
        if x.len() != self.in_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut acts = vec![0.0; self.hidden];
        self.forward_cached(x, &mut acts);
        let mut grad = NetGrad::zeros(self.in_dim, self.hidden);
        self.backprop_cached(x, &acts, upstream, &mut grad);
        Ok(grad)
    }

    /// Exact input gradient `w1^T diag(1 - tanh^2) w2^T`; the test oracle for
    /// the numerical differentiation used by the scheme.
    pub fn grad_input_analytic(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut grad = vec![0.0; self.in_dim];
        for j in 0..self.hidden {
            let row = &self.w1[j * self.in_dim..(j + 1) * self.in_dim];
            let mut pre = self.b1[j];
            for (w, xi) in row.iter().zip(x) {
                pre += w * xi;
            }
            let a = pre.tanh();
            let delta = self.w2[j] * (1.0 - a * a);
            for (g, w) in grad.iter_mut().zip(row) {
                *g += delta * w;
            }
        }
        Ok(grad)
    }

    /// Project into the constrained parameter region: each `w1` row clipped
    /// to max-norm `gamma_m`, `w2` rescaled to L1 norm `gamma_m`. Identity on
    /// nets already inside the region.
    pub fn clip_to_theta_gamma(&self, gamma_m: f64) -> Result<MlpNet> {
        if !(gamma_m > 0.0) {
            return Err(Error::invalid("clip bound gamma_m must be positive"));
        }
        let mut net = self.clone();
        for j in 0..net.hidden {
            let row = &mut net.w1[j * net.in_dim..(j + 1) * net.in_dim];
            let max = row.iter().fold(0.0f64, |m, w| m.max(w.abs()));
            if max > gamma_m {
                let scale = gamma_m / max;
                for w in row.iter_mut() {
                    *w *= scale;
                }
            }
        }
        let l1: f64 = net.w2.iter().map(|w| w.abs()).sum();
        if l1 > gamma_m {
            let scale = gamma_m / l1;
            for w in &mut net.w2 {
                *w *= scale;
            }
        }
        Ok(net)
    }
}

/// Parameter-shaped accumulator: gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl NetGrad {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        NetGrad {
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn zeros_like(net: &MlpNet) -> Self {
        NetGrad::zeros(net.in_dim, net.hidden)
    }

    pub fn add(&mut self, other: &NetGrad) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += b;
        }
        self.b2 += other.b2;
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.w1 {
            *a *= s;
        }
        for a in &mut self.b1 {
            *a *= s;
        }
        for a in &mut self.w2 {
            *a *= s;
        }
        self.b2 *= s;
    }

    /// Name of the first parameter block containing a non-finite entry.
    pub fn non_finite_block(&self) -> Option<&'static str> {
        if self.w1.iter().any(|g| !g.is_finite()) {
            return Some("w1");
        }
        if self.b1.iter().any(|g| !g.is_finite()) {
            return Some("b1");
        }
        if self.w2.iter().any(|g| !g.is_finite()) {
            return Some("w2");
        }
        if !self.b2.is_finite() {
            return Some("b2");
        }
        None
    }
}

/// Bias-corrected Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: NetGrad,
    second: NetGrad,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &MlpNet, learning_rate: f64) -> Self {
        AdamState {
            first: NetGrad::zeros_like(net),
            second: NetGrad::zeros_like(net),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam step in place. Fails on a non-finite gradient, naming the
    /// offending parameter block, before touching any state.
    pub fn adam_update(&mut self, net: &mut MlpNet, grad: &NetGrad) -> Result<()> {
        if let Some(block) = grad.non_finite_block() {
            return Err(Error::numeric(format!("non-finite gradient in parameter block {block}")));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr = self.learning_rate;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for i in 0..net.w1.len() {
            update(&mut net.w1[i], grad.w1[i], &mut self.first.w1[i], &mut self.second.w1[i]);
        }
        for i in 0..net.b1.len() {
            update(&mut net.b1[i], grad.b1[i], &mut self.first.b1[i], &mut self.second.b1[i]);
        }
        for i in 0..net.w2.len() {
            update(&mut net.w2[i], grad.w2[i], &mut self.first.w2[i], &mut self.second.w2[i]);
        }
        update(&mut net.b2, grad.b2, &mut self.first.b2, &mut self.second.b2);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn example_net() -> MlpNet {
        // m=1, w1=[2], b1=[0.3], w2=[0.5], b2=-0.1
        MlpNet::new(1, 1, vec![2.0], vec![0.3], vec![0.5], -0.1).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_bias() {
        let mut net = MlpNet::glorot(3, 5, &mut derive_stream(7, &[0]));
        net.w2 = vec![0.0; 5];
        net.b2 = 1.25;
        assert_eq!(net.forward(&[0.4, -2.0, 9.0]).unwrap(), 1.25);
    }

    #[test]
    fn tanh_at_zero_is_zero() {
        let net = MlpNet::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 0.0).unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_unit_forward_value() {
        let out = example_net().forward(&[1.0]).unwrap();
        let exact = 0.5 * (2.3f64).tanh() - 0.1;
        assert_eq!(out, exact);
        assert!((out - 0.390048).abs() < 5e-6, "{out}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = example_net();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(net.grad_params(&[], 1.0).is_err());
        assert!(net.grad_input_analytic(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = MlpNet::glorot(2, 4, &mut derive_stream(8, &[0]));
        let grad = net.grad_params(&[0.3, -0.7], 0.0).unwrap();
        assert_eq!(grad, NetGrad::zeros_like(&net));
    }

    #[test]
    fn output_bias_gradient_is_upstream() {
        let net = MlpNet::glorot(2, 4, &mut derive_stream(9, &[0]));
        let grad = net.grad_params(&[0.3, -0.7], -1.75).unwrap();
        assert_eq!(grad.b2, -1.75);
    }

    /// Central finite difference of `forward` w.r.t. one parameter.
    fn fd_param(net: &MlpNet, x: &[f64], h: f64, poke: impl Fn(&mut MlpNet, f64)) -> f64 {
        let mut up = net.clone();
        poke(&mut up, h);
        let mut dn = net.clone();
        poke(&mut dn, -h);
        (up.forward(x).unwrap() - dn.forward(x).unwrap()) / (2.0 * h)
    }

    #[test]
    fn grad_params_matches_finite_differences() {
        let h = 1e-6;
        for trial in 0..100u64 {
            let mut rng = derive_stream(10, &[trial]);
            let in_dim = 1 + (trial % 3) as usize;
            let hidden = 2 + (trial % 4) as usize;
            let net = MlpNet::glorot(in_dim, hidden, &mut rng);
            let x: Vec<f64> = (0..in_dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let grad = net.grad_params(&x, 1.0).unwrap();
            let check = |analytic: f64, fd: f64| {
                let denom = analytic.abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((analytic - fd) / denom).abs() < 1e-5,
                    "trial {trial}: analytic {analytic} vs fd {fd}"
                );
            };
            for k in 0..net.w1.len() {
                check(grad.w1[k], fd_param(&net, &x, h, |n, eps| n.w1[k] += eps));
            }
            for k in 0..net.b1.len() {
                check(grad.b1[k], fd_param(&net, &x, h, |n, eps| n.b1[k] += eps));
            }
            for k in 0..net.w2.len() {
                check(grad.w2[k], fd_param(&net, &x, h, |n, eps| n.w2[k] += eps));
            }
            check(grad.b2, fd_param(&net, &x, h, |n, eps| n.b2 += eps));
        }
    }

    #[test]
    fn input_gradient_single_unit_value() {
        let grad = example_net().grad_input_analytic(&[1.0]).unwrap();
        let t = (2.3f64).tanh();
        assert!((grad[0] - 0.5 * 2.0 * (1.0 - t * t)).abs() < 1e-15);
        // cross-check against a central difference on the input
        let h = 1e-5;
        let fd = (example_net().forward(&[1.0 + h]).unwrap()
            - example_net().forward(&[1.0 - h]).unwrap())
            / (2.0 * h);
        assert!((grad[0] - fd).abs() < 1e-9, "{} vs {}", grad[0], fd);
    }

    #[test]
    fn input_gradient_zero_when_output_layer_zero() {
        let mut net = MlpNet::glorot(3, 4, &mut derive_stream(11, &[0]));
        net.w2 = vec![0.0; 4];
        assert_eq!(net.grad_input_analytic(&[0.1, 0.2, 0.3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn input_gradient_even_for_odd_net() {
        // b1 = b2 = 0 makes the net odd in x, so its gradient is even.
        let mut net = MlpNet::glorot(2, 6, &mut derive_stream(12, &[0]));
        net.b1 = vec![0.0; 6];
        net.b2 = 0.0;
        let x = [0.37, -0.81];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g_pos = net.grad_input_analytic(&x).unwrap();
        let g_neg = net.grad_input_analytic(&neg).unwrap();
        for (a, b) in g_pos.iter().zip(&g_neg) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn input_gradient_matches_central_differences_at_second_order() {
        let net = MlpNet::glorot(2, 5, &mut derive_stream(13, &[0]));
        let x = [0.4, -0.2];
        let analytic = net.grad_input_analytic(&x).unwrap();
        let error_at = |h: f64| -> f64 {
            let mut worst = 0.0f64;
            for j in 0..2 {
                let mut up = x;
                up[j] += h;
                let mut dn = x;
                dn[j] -= h;
                let fd = (net.forward(&up).unwrap() - net.forward(&dn).unwrap()) / (2.0 * h);
                worst = worst.max((fd - analytic[j]).abs());
            }
            worst
        };
        let errs: Vec<f64> = [1e-2, 5e-3, 2.5e-3].iter().map(|&h| error_at(h)).collect();
        // halving h should quarter the error, up to slack for roundoff
        assert!(errs[0] / errs[1] > 3.0 && errs[0] / errs[1] < 5.0, "{errs:?}");
        assert!(errs[1] / errs[2] > 3.0 && errs[1] / errs[2] < 5.0, "{errs:?}");
    }

    #[test]
    fn adam_zero_gradient_is_identity_but_counts() {
        let mut net = example_net();
        let before = net.clone();
        let mut opt = AdamState::new(&net, 1e-3);
        let zero = NetGrad::zeros_like(&net);
        opt.adam_update(&mut net, &zero).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn adam_descends_against_constant_gradient() {
        let mut net = MlpNet::new(1, 1, vec![0.0], vec![0.0], vec![0.0], 0.0).unwrap();
        let mut opt = AdamState::new(&net, 1e-3);
        let mut grad = NetGrad::zeros_like(&net);
        grad.b2 = 0.7;
        for _ in 0..200 {
            opt.adam_update(&mut net, &grad).unwrap();
        }
        assert!(net.b2 < -0.1, "{}", net.b2);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut net = MlpNet::new(1, 1, vec![0.0], vec![0.0], vec![0.0], 0.0).unwrap();
        let mut opt = AdamState::new(&net, 1e-3);
        let mut grad = NetGrad::zeros_like(&net);
        grad.b2 = 0.3;
        opt.adam_update(&mut net, &grad).unwrap();
        // bias-corrected m/sqrt(v) = g/|g| on the first step
        assert!((net.b2.abs() - 1e-3).abs() < 1e-9, "{}", net.b2);
        assert!(net.b2 < 0.0);
    }

    #[test]
    fn adam_rejects_non_finite_gradient_naming_block() {
        let mut net = example_net();
        let mut opt = AdamState::new(&net, 1e-3);
        let mut grad = NetGrad::zeros_like(&net);
        grad.w1[0] = f64::NAN;
        let err = opt.adam_update(&mut net, &grad).unwrap_err();
        assert!(err.to_string().contains("w1"), "{err}");
    }

    #[test]
    fn clip_identity_inside_region() {
        let net = example_net();
        let clipped = net.clip_to_theta_gamma(10.0).unwrap();
        assert_eq!(net, clipped);
    }

    #[test]
    fn clip_rescales_output_l1_norm() {
        let mut net = MlpNet::zeros(1, 2);
        net.w2 = vec![3.0, -1.0]; // L1 norm 4 = 2 * gamma_m
        let clipped = net.clip_to_theta_gamma(2.0).unwrap();
        assert_eq!(clipped.w2, vec![1.5, -0.5]);
    }

    #[test]
    fn clip_enforces_both_constraints() {
        let mut rng = derive_stream(14, &[0]);
        let mut net = MlpNet::glorot(3, 8, &mut rng);
        for w in &mut net.w1 {
            *w *= 50.0;
        }
        for w in &mut net.w2 {
            *w *= 50.0;
        }
        let gamma_m = 1.5;
        let clipped = net.clip_to_theta_gamma(gamma_m).unwrap();
        for j in 0..clipped.hidden {
            let row = &clipped.w1[j * 3..(j + 1) * 3];
            assert!(row.iter().all(|w| w.abs() <= gamma_m + 1e-12));
        }
        let l1: f64 = clipped.w2.iter().map(|w| w.abs()).sum();
        assert!(l1 <= gamma_m + 1e-12);
        // one-hidden-layer bound: sup |grad_x forward| <= gamma_m^2
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let g = clipped.grad_input_analytic(&x).unwrap();
            let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(norm <= gamma_m * gamma_m + 1e-12, "{norm}");
        }
    }

    #[test]
    fn checkpoint_round_trips_through_json() {
        let net = MlpNet::glorot(2, 3, &mut derive_stream(15, &[0]));
        let text = serde_json::to_string(&net).unwrap();
        let back: MlpNet = serde_json::from_str(&text).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(MlpNet::new(0, 1, vec![], vec![0.0], vec![0.0], 0.0).is_err());
        assert!(MlpNet::new(2, 2, vec![0.0; 3], vec![0.0; 2], vec![0.0; 2], 0.0).is_err());
        assert!(example_net().clip_to_theta_gamma(0.0).is_err());
    }
}
