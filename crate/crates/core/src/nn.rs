//! Minimal feed-forward toolkit used by the trajectory-density learner and
//! the behavior-cloning baseline: tanh MLPs over a single flat parameter
//! vector (so the optimizer and finite-difference checks can address every
//! weight by index) plus an adaptive-moment gradient optimizer.

use crate::rng::seeded_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Four-lane dot product: independent partial sums unlock instruction-level
/// parallelism and vectorization while keeping a fixed, deterministic
/// summation order => `(s0 + s1) + (s2 + s3)` with lanes striped by index.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = [0.0f64; 4];
    let n = a.len();
    let chunks = n / 4 * 4;
    let mut i = 0;
    while i < chunks {
        s[0] += a[i] * b[i];
        s[1] += a[i + 1] * b[i + 1];
        s[2] += a[i + 2] * b[i + 2];
        s[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut lane = 0;
    while i < n {
        s[lane] += a[i] * b[i];
        i += 1;
        lane += 1;
    }
    (s[0] + s[1]) + (s[2] + s[3])
}

/// Fully connected tanh network. Layer `l` maps `dims[l] -> dims[l+1]`;
/// every layer applies tanh except, optionally, the last.
///
/// Parameters live in one flat vector: per layer, the weight matrix
/// (row-major, `out x in`) followed by the bias. Row products use [`dot`],
/// so any code reproducing a layer's arithmetic must use the same lanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dims: Vec<usize>,
    pub output_tanh: bool,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    pub fn new_seeded(dims: &[usize], output_tanh: bool, seed: u64) -> Mlp {
        let mut rng = seeded_rng(seed);
        let mut params = Vec::with_capacity(Self::param_count_for(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-a..=a));
            }
            for _ in 0..fan_out {
                params.push(0.0);
            }
        }
        Mlp {
            dims: dims.to_vec(),
            output_tanh,
            params,
        }
    }

    pub fn zeros(dims: &[usize], output_tanh: bool) -> Mlp {
        Mlp {
            dims: dims.to_vec(),
            output_tanh,
            params: vec![0.0; Self::param_count_for(dims)],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    /// Forward pass storing per-layer activations for backprop.
    /// `cache.activations[0]` is the input; `[l + 1]` is layer `l`'s output.
    pub fn forward_cached(&self, x: &[f64], cache: &mut MlpCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        cache.activations.clear();
        cache.activations.push(x.to_vec());
        let mut off = 0usize;
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let mut out = vec![0.0f64; n_out];
            {
                let input = &cache.activations[l];
                for (o, out_v) in out.iter_mut().enumerate() {
                    let row = &self.params[off + o * n_in..off + (o + 1) * n_in];
                    let acc = self.params[off + n_in * n_out + o] + dot(row, input);
                    *out_v = if self.output_tanh || l + 1 < self.layer_count() {
                        acc.tanh()
                    } else {
                        acc
                    };
                }
            }
            off += n_in * n_out + n_out;
            cache.activations.push(out);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.forward_cached(x, &mut cache);
        cache.activations.pop().unwrap()
    }

    /// Backprop `dout` (gradient w.r.t. the network output) through the
    /// cached activations. Parameter gradients accumulate into `grad`
    /// (same flat layout as `params`); returns the gradient w.r.t. the
    /// input unless `need_dx` is false.
    pub fn backward(
        &self,
        cache: &MlpCache,
        dout: &[f64],
        grad: &mut [f64],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        debug_assert_eq!(grad.len(), self.param_count());
        let mut layer_offsets = Vec::with_capacity(self.layer_count());
        let mut off = 0usize;
        for l in 0..self.layer_count() {
            layer_offsets.push(off);
            off += self.dims[l] * self.dims[l + 1] + self.dims[l + 1];
        }

        let mut da = dout.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = layer_offsets[l];
            let input = &cache.activations[l];
            let output = &cache.activations[l + 1];
            let activated = self.output_tanh || l + 1 < self.layer_count();
            // dz = da * act'(z); tanh' computed from the activation itself.
            let mut dz = da;
            if activated {
                for (d, a) in dz.iter_mut().zip(output.iter()) {
                    *d *= 1.0 - a * a;
                }
            }
            for (o, dzo) in dz.iter().enumerate() {
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, v) in row.iter_mut().zip(input.iter()) {
                    *g += dzo * v;
                }
                grad[off + n_in * n_out + o] += dzo;
            }
            if l == 0 && !need_dx {
                return None;
            }
            let mut dprev = vec![0.0f64; n_in];
            for (o, dzo) in dz.iter().enumerate() {
                let row = &self.params[off + o * n_in..off + (o + 1) * n_in];
                for (d, w) in dprev.iter_mut().zip(row.iter()) {
                    *d += dzo * w;
                }
            }
            da = dprev;
        }
        Some(da)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub activations: Vec<Vec<f64>>,
}

/// Adaptive-moment gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// softplus(x) = ln(1 + e^x), computed stably for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// d/dx softplus(x) = sigmoid(x).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
