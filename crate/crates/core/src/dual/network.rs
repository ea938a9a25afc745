//! Two-hidden-layer perceptron producing the dual functions `h(a, x)` and `w(a, x)`.
//!
//! Inputs are `[a, standardised x]`. Both heads also receive a direct skip
//! connection from `a`, so a network with zero output weights represents a
//! per-arm constant. Outputs are in standardised outcome units: the caller
//! maps `lambda = scale * exp(h)` and `w = center + scale * w'`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualNetwork {
    inputs: usize,
    hidden: usize,
    pub clip_h: f64,
    x_center: Vec<f64>,
    x_scale: Vec<f64>,
    params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Cache {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    raw_h: f64,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    skip: usize,
    len: usize,
}

impl DualNetwork {
    /// He-initialised hidden layers with zero output weights; the heads start
    /// at `h = h0[a]`, `w' = w0[a]`.
    pub fn new(
        x_center: Vec<f64>,
        x_scale: Vec<f64>,
        hidden: usize,
        clip_h: f64,
        h0: [f64; 2],
        w0: [f64; 2],
        seed: u64,
    ) -> Self {
        let inputs = x_center.len() + 1;
        let mut net = DualNetwork { inputs, hidden, clip_h, x_center, x_scale, params: Vec::new() };
        let lay = net.layout();
        net.params = vec![0.0; lay.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = (6.0 / inputs as f64).sqrt();
        for p in &mut net.params[lay.w1..lay.b1] {
            *p = rng.random_range(-b1..b1);
        }
        let b2 = (6.0 / hidden as f64).sqrt();
        for p in &mut net.params[lay.w2..lay.b2] {
            *p = rng.random_range(-b2..b2);
        }
        net.params[lay.b3] = h0[0].clamp(-clip_h, clip_h);
        net.params[lay.b3 + 1] = w0[0];
        net.params[lay.skip] = h0[1].clamp(-clip_h, clip_h) - net.params[lay.b3];
        net.params[lay.skip + 1] = w0[1] - w0[0];
        net
    }

    fn layout(&self) -> Layout {
        let (i, h) = (self.inputs, self.hidden);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + 2 * h;
        let skip = b3 + 2;
        Layout { w1, b1, w2, b2, w3, b3, skip, len: skip + 2 }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn d(&self) -> usize {
        self.inputs - 1
    }

    pub fn new_cache(&self) -> Cache {
        Cache {
            input: vec![0.0; self.inputs],
            z1: vec![0.0; self.hidden],
            a1: vec![0.0; self.hidden],
            z2: vec![0.0; self.hidden],
            a2: vec![0.0; self.hidden],
            raw_h: 0.0,
        }
    }

    /// `(h, w')` at `(a, x)`, filling `cache` for [`Self::backward`].
    pub fn forward(&self, a: u8, x: &[f64], cache: &mut Cache) -> (f64, f64) {
        let lay = self.layout();
        let (ni, nh) = (self.inputs, self.hidden);
        let p = &self.params;
        let af = f64::from(a);
        cache.input[0] = af;
        for j in 0..ni - 1 {
            cache.input[j + 1] = (x[j] - self.x_center[j]) / self.x_scale[j];
        }
        for k in 0..nh {
            let row = &p[lay.w1 + k * ni..lay.w1 + (k + 1) * ni];
            let z = p[lay.b1 + k] + dot(row, &cache.input);
            cache.z1[k] = z;
            cache.a1[k] = z.max(0.0);
        }
        for k in 0..nh {
            let row = &p[lay.w2 + k * nh..lay.w2 + (k + 1) * nh];
            let z = p[lay.b2 + k] + dot(row, &cache.a1);
            cache.z2[k] = z;
            cache.a2[k] = z.max(0.0);
        }
        let raw_h = p[lay.b3] + p[lay.skip] * af + dot(&p[lay.w3..lay.w3 + nh], &cache.a2);
        let w = p[lay.b3 + 1] + p[lay.skip + 1] * af + dot(&p[lay.w3 + nh..lay.w3 + 2 * nh], &cache.a2);
        cache.raw_h = raw_h;
        (raw_h.clamp(-self.clip_h, self.clip_h), w)
    }

    /// Adds `offsets[a]` to the `w'` output of arm `a` at every `x`.
    pub fn shift_w(&mut self, offsets: [f64; 2]) {
        let lay = self.layout();
        self.params[lay.b3 + 1] += offsets[0];
        self.params[lay.skip + 1] += offsets[1] - offsets[0];
    }

    /// Outputs without keeping activations.
    pub fn eval(&self, a: u8, x: &[f64]) -> (f64, f64) {
        let mut cache = self.new_cache();
        self.forward(a, x, &mut cache)
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/dh` and `dL/dw'` at the cached point.
    pub fn backward(&self, cache: &Cache, d_h: f64, d_w: f64, grad: &mut [f64], scratch: &mut Vec<f64>) {
        let lay = self.layout();
        let (ni, nh) = (self.inputs, self.hidden);
        let p = &self.params;
        // the clip has zero derivative outside its range
        let d_h = if cache.raw_h.abs() < self.clip_h { d_h } else { 0.0 };
        let af = cache.input[0];
        grad[lay.b3] += d_h;
        grad[lay.b3 + 1] += d_w;
        grad[lay.skip] += d_h * af;
        grad[lay.skip + 1] += d_w * af;
        scratch.clear();
        scratch.resize(2 * nh, 0.0);
        let (dz2, dz1) = scratch.split_at_mut(nh);
        for k in 0..nh {
            grad[lay.w3 + k] += d_h * cache.a2[k];
            grad[lay.w3 + nh + k] += d_w * cache.a2[k];
            if cache.z2[k] > 0.0 {
                dz2[k] = d_h * p[lay.w3 + k] + d_w * p[lay.w3 + nh + k];
            }
        }
        for k in 0..nh {
            let g = dz2[k];
            if g == 0.0 {
                continue;
            }
            grad[lay.b2 + k] += g;
            let base = lay.w2 + k * nh;
            for (j, &a1) in cache.a1.iter().enumerate() {
                grad[base + j] += g * a1;
                dz1[j] += g * p[base + j];
            }
        }
        for k in 0..nh {
            if cache.z1[k] <= 0.0 {
                continue;
            }
            let g = dz1[k];
            grad[lay.b1 + k] += g;
            let base = lay.w1 + k * ni;
            for (j, &v) in cache.input.iter().enumerate() {
                grad[base + j] += g * v;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_as_per_arm_constants() {
        let net = DualNetwork::new(vec![0.0; 3], vec![1.0; 3], 16, 20.0, [0.1, -0.4], [1.5, 2.5], 7);
        assert_eq!(net.eval(0, &[0.3, -1.0, 2.0]), (0.1, 1.5));
        let (h, w) = net.eval(1, &[-0.7, 0.0, 0.5]);
        assert!((h + 0.4).abs() < 1e-15 && (w - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = DualNetwork::new(vec![0.0; 2], vec![1.0; 2], 8, 20.0, [0.0, 0.0], [0.0, 0.0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in net.params_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let x = [0.4, -0.9];
        // L = 0.7 h - 1.3 w
        let loss = |n: &DualNetwork| {
            let (h, w) = n.eval(1, &x);
            0.7 * h - 1.3 * w
        };
        let mut cache = net.new_cache();
        net.forward(1, &x, &mut cache);
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&cache, 0.7, -1.3, &mut grad, &mut Vec::new());
        for i in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += 1e-6;
            let mut minus = net.clone();
            minus.params_mut()[i] -= 1e-6;
            let fd = (loss(&plus) - loss(&minus)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }
}
