//! Fully-connected network with SiLU hidden activations and hand-written backprop.
//!
//! All weights and biases live in one flat vector, layer by layer: the
//! `out × in` row-major weight matrix followed by the `out` biases.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Pre-activations and activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input layer")
    }
}

fn silu(z: f64) -> f64 {
    z * crate::numeric::sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = crate::numeric::sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Random weights with variance `1/fan_in`, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let scale = (1.0 / w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let z: f64 = StandardNormal.sample(rng);
                params.push(scale * z);
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Parameter(format!("invalid layer sizes {sizes:?}")));
        }
        if params.len() != param_count(&sizes) {
            return Err(Error::Shape(format!(
                "{} parameters for layer sizes {sizes:?} (expected {})",
                params.len(),
                param_count(&sizes)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("non-finite network parameter".into()));
        }
        Ok(Self { sizes, params })
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

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut a = input.to_vec();
        let mut offset = 0;
        let layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let z = self.affine(offset, n_in, n_out, &a);
            offset += n_in * n_out + n_out;
            a = if l + 1 < layers {
                z.into_iter().map(silu).collect()
            } else {
                z
            };
        }
        a
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(input.to_vec());
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let z = self.affine(offset, n_in, n_out, &activations[l]);
            offset += n_in * n_out + n_out;
            let a = if l + 1 < layers {
                z.iter().map(|&v| silu(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            activations.push(a);
        }
        ForwardCache { activations, pre }
    }

    fn affine(&self, offset: usize, n_in: usize, n_out: usize, a: &[f64]) -> Vec<f64> {
        let weights = &self.params[offset..offset + n_in * n_out];
        let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        weights
            .chunks_exact(n_in)
            .zip(bias)
            .map(|(row, b)| b + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    /// Accumulates `scale · ∂(d_output · output)/∂θ` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], scale: f64, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta: Vec<f64> = d_output.iter().map(|d| d * scale).collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= silu_grad(z);
                }
            }
            let off = offsets[l];
            let a = &cache.activations[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (j, &d) in delta.iter().enumerate() {
                gb[j] += d;
                for (g, &x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(a) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut next = vec![0.0; n_in];
                for (j, &d) in delta.iter().enumerate() {
                    for (n, &w) in next.iter_mut().zip(&weights[j * n_in..(j + 1) * n_in]) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        assert_eq!(net.params().len(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(Mlp::from_params(vec![3, 4, 2], vec![0.0; 5]).is_err());
        assert!(Mlp::new(&[3], &mut rng).is_err());
    }

    #[test]
    fn forward_matches_manual_evaluation() {
        // 2 -> 2 -> 1 with hand-picked weights.
        let params = vec![1.0, -1.0, 0.5, 2.0, 0.1, -0.2, 3.0, -1.0, 0.25];
        let net = Mlp::from_params(vec![2, 2, 1], params).unwrap();
        let x = [0.3, -0.7];
        let h1 = silu(1.0 * 0.3 - 1.0 * -0.7 + 0.1);
        let h2 = silu(0.5 * 0.3 + 2.0 * -0.7 - 0.2);
        let expected = 3.0 * h1 - h2 + 0.25;
        assert!((net.forward(&x)[0] - expected).abs() < 1e-15);
        assert_eq!(net.forward_cached(&x).output(), net.forward(&x).as_slice());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 6, 2], &mut rng).unwrap();
        let x = [0.3, -1.1, 0.5, 0.9, -0.2];
        let w = [0.7, -1.3];
        let objective = |n: &Mlp| -> f64 { n.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum() };
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&net.forward_cached(&x), &w, 1.0, &mut grad);
        for i in 0..grad.len() {
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!(
                relative_error(grad[i], fd, 1e-8) < 1e-5,
                "param {i}: {} vs {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn silu_derivative() {
        for z in [-5.0, -0.3, 0.0, 0.8, 6.0] {
            let fd = (silu(z + 1e-6) - silu(z - 1e-6)) / 2e-6;
            assert!((silu_grad(z) - fd).abs() < 1e-8);
        }
    }
}
