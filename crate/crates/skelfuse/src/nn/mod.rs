//! Minimal f64 neural-network building blocks.
//!
//! Everything runs at float64 with explicit forward/backward passes and no
//! hidden global state, which keeps training deterministic under a fixed seed
//! and makes finite-difference gradient verification cheap. Layers cache what
//! their backward pass needs; `backward` accumulates into `Param::grad`.

mod attention;
mod conv;
mod embed;
mod linear;
mod norm;

pub use attention::{PatchMerging, WindowAttention};
pub use conv::{Conv2d, MaxPool2d};
pub use embed::SplitPatchEmbed;
pub use linear::Linear;
pub use norm::LayerNorm;

use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Standard normal via Box-Muller.
pub fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// N(0, std²) tensor.
pub fn normal_init(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| randn(rng) * std)
}

/// Kaiming-style init for layers followed by a smooth nonlinearity.
pub fn kaiming_init(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<f64> {
    normal_init(rng, shape, (2.0 / fan_in as f64).sqrt())
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Smooth GELU (tanh approximation). Smoothness matters: finite-difference
/// gradient checks straddle kinks of piecewise-linear activations.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + 0.044_715 * x * x * x)).tanh())
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    let inner = GELU_K * (x + 0.044_715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_K * (1.0 + 3.0 * 0.044_715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Elementwise GELU layer.
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    cache: Option<ArrayD<f64>>,
}

impl Gelu {
    pub fn forward(&mut self, x: &ArrayD<f64>) -> ArrayD<f64> {
        self.cache = Some(x.clone());
        x.mapv(gelu_scalar)
    }

    pub fn backward(&mut self, dy: &ArrayD<f64>) -> ArrayD<f64> {
        let x = self.cache.as_ref().expect("forward before backward");
        let mut dx = x.mapv(gelu_grad_scalar);
        dx *= dy;
        dx
    }
}

/// Mean softmax cross-entropy over a batch.
///
/// Returns (loss, dlogits, probs); `dlogits` is the gradient of the mean loss.
pub fn softmax_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
) -> (f64, Array2<f64>, Array2<f64>) {
    let (b, k) = logits.dim();
    assert_eq!(b, labels.len(), "batch size mismatch");
    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in probs.rows_mut().into_iter().zip(labels) {
        assert!(label < k, "label {label} out of range for {k} classes");
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
    }
    loss /= b as f64;
    let mut dlogits = probs.clone();
    for (mut row, &label) in dlogits.rows_mut().into_iter().zip(labels) {
        row[label] -= 1.0;
        row.mapv_inplace(|v| v / b as f64);
    }
    (loss, dlogits, probs)
}

/// Adam with decoupled weight decay. Moment state is keyed by parameter name,
/// so the caller may rebuild its parameter list between steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled (AdamW-style); applied directly to the weights each step.
    pub weight_decay: f64,
    t: u64,
    state: BTreeMap<String, (ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            weight_decay,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            let (m, v) = self
                .state
                .entry(p.name.clone())
                .or_insert_with(|| (ArrayD::zeros(p.value.raw_dim()), ArrayD::zeros(p.value.raw_dim())));
            azip_update(m, v, &p.grad, self.beta1, self.beta2);
            if self.weight_decay != 0.0 {
                let wd = lr * self.weight_decay;
                p.value.mapv_inplace(|w| w - wd * w);
            }
            for ((w, &mi), &vi) in p.value.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

fn azip_update(m: &mut ArrayD<f64>, v: &mut ArrayD<f64>, g: &ArrayD<f64>, b1: f64, b2: f64) {
    for ((mi, vi), &gi) in m.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
        *mi = b1 * *mi + (1.0 - b1) * gi;
        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use testutil::*;

    #[test]
    fn gelu_matches_reference_points() {
        // g(0) = 0; g(x) ~ x for large x; g(-x) small
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        assert!(gelu_scalar(-10.0).abs() < 1e-6);
        // reference value computed by hand from the tanh formula
        let x = 1.0_f64;
        let expected = 0.5 * (1.0 + (GELU_K * 1.044_715_f64).tanh());
        assert!((gelu_scalar(x) - expected).abs() < 1e-12);
    }

    #[test]
    fn gelu_gradient_matches_fd() {
        for &x in &[-3.0, -0.7, -0.1, 0.0, 0.4, 1.3, 2.9] {
            let err = fd_rel_err(gelu_scalar, x, gelu_grad_scalar(x));
            assert!(err < 1e-6, "x={x} err={err}");
        }
    }

    #[test]
    fn gelu_layer_backward() {
        let x = rand_array(&[4, 5], 1, 2.0);
        let mut layer = Gelu::default();
        let _ = layer.forward(&x);
        let dy = rand_array(&[4, 5], 2, 1.0);
        let dx = layer.backward(&dy);
        for idx in [[0usize, 0usize], [2, 3], [3, 4]] {
            let mut x2 = x.clone();
            let base = x[IxDyn(&idx)];
            let analytic = dx[IxDyn(&idx)];
            let err = fd_rel_err(
                |v| {
                    x2[IxDyn(&idx)] = v;
                    (&x2.mapv(gelu_scalar) * &dy).sum()
                },
                base,
                analytic,
            );
            assert!(err < 1e-6);
        }
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        // equal logits over K classes → loss = ln K
        let logits = Array2::zeros((2, 4));
        let (loss, dlogits, probs) = softmax_cross_entropy(&logits, &[0, 3]);
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12);
        assert!((probs[[0, 0]] - 0.25).abs() < 1e-12);
        // gradient rows sum to zero
        for row in dlogits.rows() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ce_gradient_matches_fd() {
        let logits = arr2(&[[0.3, -1.2, 2.0], [0.0, 0.5, -0.5]]);
        let labels = [2usize, 1];
        let (_, dlogits, _) = softmax_cross_entropy(&logits, &labels);
        for (i, j) in [(0, 0), (0, 2), (1, 1), (1, 2)] {
            let base = logits[[i, j]];
            let err = fd_rel_err(
                |v| {
                    let mut l = logits.clone();
                    l[[i, j]] = v;
                    softmax_cross_entropy(&l, &labels).0
                },
                base,
                dlogits[[i, j]],
            );
            assert!(err < 1e-6, "({i},{j}) err={err}");
        }
    }

    #[test]
    fn softmax_ce_peaked_logits() {
        // a hand-computable case: logits (ln 3, 0), label 0 → p = (3/4, 1/4)
        let logits = arr2(&[[3.0_f64.ln(), 0.0]]);
        let (loss, _, probs) = softmax_cross_entropy(&logits, &[0]);
        assert!((probs[[0, 0]] - 0.75).abs() < 1e-12);
        assert!((loss - (4.0_f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize (w - 3)² elementwise
        let mut p = Param::new("w", ArrayD::zeros(IxDyn(&[4])));
        let mut opt = Adam::new(0.9, 0.999, 0.0);
        for _ in 0..2000 {
            p.zero_grad();
            let g = p.value.mapv(|w| 2.0 * (w - 3.0));
            p.grad.assign(&g);
            opt.step(&mut [&mut p], 0.05);
        }
        for &w in p.value.iter() {
            assert!((w - 3.0).abs() < 1e-3, "w={w}");
        }
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // with bias correction the very first update has magnitude ≈ lr
        let mut p = Param::new("w", ArrayD::zeros(IxDyn(&[1])));
        let mut opt = Adam::new(0.9, 0.999, 0.0);
        p.grad.fill(0.123);
        opt.step(&mut [&mut p], 0.01);
        assert!((p.value[IxDyn(&[0])] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_weight_decay_shrinks_weights() {
        let mut p = Param::new("w", ArrayD::from_elem(IxDyn(&[1]), 5.0));
        let mut opt = Adam::new(0.9, 0.999, 0.1);
        // zero gradient: only decay acts
        opt.step(&mut [&mut p], 0.1);
        let w = p.value[IxDyn(&[0])];
        assert!(w < 5.0 && w > 4.9);
    }

    #[test]
    fn randn_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 20000;
        let samples: Vec<f64> = (0..n).map(|_| randn(&mut rng)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean={mean}");
        assert!((var - 1.0).abs() < 0.05, "var={var}");
    }
}
