//! Minimal fully-connected network with hand-derived backpropagation.
//!
//! Parameters live in one flat vector (weights then biases per layer) so the
//! optimizer, gradient checker, and checkpoint format all see the same
//! layout.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn grad_from_output(&self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    /// Per layer: (weight offset, bias offset) into `params`.
    offsets: Vec<(usize, usize)>,
}

/// Reusable forward-pass scratch; holds post-activation values per layer.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    activations: Vec<Vec<f64>>,
}

impl Mlp {
    /// Xavier-uniform initialization, hidden activations as given, linear
    /// output layer.
    pub fn new(sizes: Vec<usize>, activation: Activation, rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut total = 0usize;
        for l in 0..sizes.len() - 1 {
            let w = total;
            total += sizes[l] * sizes[l + 1];
            let b = total;
            total += sizes[l + 1];
            offsets.push((w, b));
        }
        let mut params = vec![0.0; total];
        for l in 0..sizes.len() - 1 {
            let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            let (w, b) = offsets[l];
            for p in params[w..b].iter_mut() {
                *p = rng.uniform(-bound, bound);
            }
        }
        Self {
            sizes,
            activation,
            params,
            offsets,
        }
    }

    pub fn from_params(
        sizes: Vec<usize>,
        activation: Activation,
        params: Vec<f64>,
    ) -> Option<Self> {
        let mut probe = Self::new(sizes, activation, &mut Rng::new(0));
        if probe.params.len() != params.len() {
            return None;
        }
        probe.params = params;
        Some(probe)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Forward pass; the cache retains every layer's activations for
    /// [`Mlp::backward`]. Returns the output slice.
    pub fn forward<'c>(&self, input: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        debug_assert_eq!(input.len(), self.input_dim());
        let layers = self.sizes.len();
        cache.activations.resize(layers, Vec::new());
        cache.activations[0].clear();
        cache.activations[0].extend_from_slice(input);
        for l in 0..layers - 1 {
            let (w_off, b_off) = self.offsets[l];
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let last = l == layers - 2;
            let (done, rest) = cache.activations.split_at_mut(l + 1);
            let inputs = &done[l];
            let out = &mut rest[0];
            out.clear();
            for o in 0..n_out {
                let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
                let mut z = self.params[b_off + o];
                for (w, x) in row.iter().zip(inputs) {
                    z += w * x;
                }
                out.push(if last { z } else { self.activation.apply(z) });
            }
        }
        cache.activations.last().unwrap()
    }

    /// Scalar convenience for single-output networks.
    pub fn forward_scalar(&self, input: &[f64], cache: &mut MlpCache) -> f64 {
        self.forward(input, cache)[0]
    }

    /// Accumulate parameter gradients for the sample held in `cache`, given
    /// the loss gradient with respect to the network output.
    pub fn backward(&self, cache: &MlpCache, out_grad: &[f64], grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        debug_assert_eq!(out_grad.len(), self.output_dim());
        let layers = self.sizes.len();
        let mut delta = out_grad.to_vec();
        for l in (0..layers - 1).rev() {
            let (w_off, b_off) = self.offsets[l];
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let inputs = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                let g_row = &mut grads[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, x) in g_row.iter_mut().zip(inputs) {
                    *g += d * x;
                }
                grads[b_off + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                for (p, h) in prev.iter_mut().zip(&cache.activations[l]) {
                    *p *= self.activation.grad_from_output(*h);
                }
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 -> 2 -> 1 tanh network with known parameters.
        let sizes = vec![2, 2, 1];
        // layer 0 weights (2x2), layer 0 bias (2), layer 1 weights (1x2),
        // layer 1 bias (1)
        let params = vec![0.5, -1.0, 0.25, 0.75, 0.1, -0.2, 1.5, -0.5, 0.3];
        let mlp = Mlp::from_params(sizes, Activation::Tanh, params).unwrap();
        let mut cache = MlpCache::default();
        let x = [1.0, 2.0];
        let h0 = (0.5 * 1.0 - 1.0 * 2.0 + 0.1).tanh();
        let h1 = (0.25 * 1.0 + 0.75 * 2.0 - 0.2).tanh();
        let expected = 1.5 * h0 - 0.5 * h1 + 0.3;
        let y = mlp.forward_scalar(&x, &mut cache);
        assert!((y - expected).abs() < 1e-14);
    }

    #[test]
    fn deterministic_init() {
        let a = Mlp::new(vec![3, 8, 1], Activation::Tanh, &mut Rng::new(4));
        let b = Mlp::new(vec![3, 8, 1], Activation::Tanh, &mut Rng::new(4));
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn backward_linear_model_exact() {
        // Single linear layer: y = w.x + b, L = (y - t)^2 has exact grads.
        let mlp = Mlp::from_params(vec![2, 1], Activation::Tanh, vec![2.0, -3.0, 0.5]).unwrap();
        let mut cache = MlpCache::default();
        let x = [1.5, -0.5];
        let t = 1.0;
        let y = mlp.forward_scalar(&x, &mut cache);
        let mut grads = vec![0.0; mlp.n_params()];
        mlp.backward(&cache, &[2.0 * (y - t)], &mut grads);
        let expected = [
            2.0 * (y - t) * x[0],
            2.0 * (y - t) * x[1],
            2.0 * (y - t),
        ];
        for (g, e) in grads.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }
}
