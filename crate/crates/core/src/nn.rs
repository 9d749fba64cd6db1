//! Dense multi-layer perceptrons with hand-written backpropagation.
//!
//! Parameters live in one flat vector per network so optimizers, gradient
//! clipping and serialization all work on plain slices.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected network; hidden layers use `activation`, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    /// Per layer: row-major `out x in` weights followed by `out` biases.
    params: Vec<f64>,
}

/// Layer outputs recorded by [`Mlp::forward_trace`], input first.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }
}

impl Mlp {
    /// Weights drawn from `N(0, 1/fan_in)`, the last layer scaled by
    /// `output_scale`; biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, output_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        let layers = sizes.len() - 1;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let mut std = (1.0 / fan_in as f64).sqrt();
            if l + 1 == layers {
                std *= output_scale;
            }
            let normal = Normal::new(0.0, std).expect("finite standard deviation");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        }
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Rebuilds a network from serialized parts; `None` when the parameter count does not fit.
    pub fn from_parts(sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && Self::count_params(&sizes) == params.len()).then_some(Self {
            sizes,
            activation,
            params,
        })
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_trace(input).activations.pop().unwrap()
    }

    pub fn forward_trace(&self, input: &[f64]) -> Trace {
        assert_eq!(input.len(), self.input_dim(), "input width");
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let x = &activations[l];
            let mut y: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + w[o * fan_in..(o + 1) * fan_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < layers {
                for v in &mut y {
                    *v = self.activation.apply(*v);
                }
            }
            activations.push(y);
            offset += fan_in * fan_out + fan_out;
        }
        Trace { activations }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`,
    /// and returns `d loss / d input`.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let x = &trace.activations[l];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[base + fan_in * fan_out + o] += d;
            }
            let w = &self.params[base..base + fan_in * fan_out];
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wi;
                }
            }
            if l > 0 {
                for (p, y) in prev.iter_mut().zip(x) {
                    *p *= self.activation.derivative(*y);
                }
            }
            delta = prev;
        }
        delta
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_sum).collect()
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Gradient descent with classical momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, num_params: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v - self.lr * g;
            *p += *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, num_params: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_grad(net: &Mlp, loss: impl Fn(&Mlp) -> f64) -> Vec<f64> {
        let h = 1e-6;
        (0..net.num_params())
            .map(|i| {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for act in [Activation::Tanh, Activation::Relu] {
            let net = Mlp::new(&[4, 5, 3], act, 1.0, &mut rng);
            let x = [0.3, -0.7, 0.1, 0.9];
            let target = [0.5, -0.2, 0.1];
            let loss = |n: &Mlp| n.forward(&x).iter().zip(&target).map(|(y, t)| (y - t).powi(2)).sum::<f64>();
            let trace = net.forward_trace(&x);
            let g_out: Vec<f64> = trace.output().iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
            let mut grad = vec![0.0; net.num_params()];
            net.backward(&trace, &g_out, &mut grad);
            let numeric = numeric_grad(&net, loss);
            for (a, n) in grad.iter().zip(&numeric) {
                assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "{act:?}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn input_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 4, 2], Activation::Tanh, 1.0, &mut rng);
        let x = [0.2, 0.4, -0.3];
        let trace = net.forward_trace(&x);
        let mut grad = vec![0.0; net.num_params()];
        let gx = net.backward(&trace, &[1.0, 0.0], &mut grad);
        for i in 0..3 {
            let mut xp = x;
            xp[i] += 1e-6;
            let mut xm = x;
            xm[i] -= 1e-6;
            let n = (net.forward(&xp)[0] - net.forward(&xm)[0]) / 2e-6;
            assert!((gx[i] - n).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_is_normalized() {
        let p = softmax(&[1000.0, 1001.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[1.0, 2.0, 3.0]);
        for (a, b) in lp.iter().zip(softmax(&[1.0, 2.0, 3.0])) {
            assert!((a.exp() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut a = vec![3.0, 0.0];
        let mut b = vec![4.0];
        let before = clip_grad_norm(&mut [&mut a, &mut b], 0.5);
        assert_eq!(before, 5.0);
        assert!((l2_norm(&[a[0], a[1], b[0]]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn optimizers_descend_a_quadratic() {
        let mut sgd = SgdMomentum::new(0.05, 0.9, 2);
        let mut adam = Adam::new(0.05, 2);
        let mut p1 = vec![1.0, -2.0];
        let mut p2 = p1.clone();
        for _ in 0..500 {
            let g1: Vec<f64> = p1.iter().map(|v| 2.0 * v).collect();
            sgd.step(&mut p1, &g1);
            let g2: Vec<f64> = p2.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut p2, &g2);
        }
        assert!(l2_norm(&p1) < 1e-3 && l2_norm(&p2) < 1e-2, "{p1:?} {p2:?}");
    }

    #[test]
    fn from_parts_checks_size() {
        assert!(Mlp::from_parts(vec![2, 1], Activation::Tanh, vec![0.0; 3]).is_some());
        assert!(Mlp::from_parts(vec![2, 1], Activation::Tanh, vec![0.0; 4]).is_none());
    }
}
