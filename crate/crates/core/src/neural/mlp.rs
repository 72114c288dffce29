use ndarray::Array2;
use rand::Rng;

use super::dense::{silu, silu_backward, Dense, Parameters};

/// Plain feed-forward stack: SiLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept for the backward pass.
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp::zeros(&self.sizes())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(Dense::fan_out));
        s
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
        };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            cache.inputs.push(h);
            if i == last {
                return (z, cache);
            }
            h = silu(&z);
            cache.pre.push(z);
        }
        unreachable!()
    }

    /// Parameter gradients given `∂L/∂output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &Array2<f64>) -> Mlp {
        let mut grad = self.zeros_like();
        let mut d = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let dh = self.layers[i].backward(&cache.inputs[i], &d, &mut grad.layers[i]);
            if i > 0 {
                d = silu_backward(&cache.pre[i - 1], &dh);
            }
        }
        grad
    }
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.tensors_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::init(&[3, 7, 5, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
        let loss = |n: &Mlp| n.forward(&x).iter().map(|v| v * v).sum::<f64>();
        let (out, cache) = net.forward_cached(&x);
        let grad = net.backward(&cache, &(out * 2.0)).flatten();
        let base = net.flatten();
        for k in (0..base.len()).step_by(3) {
            let h = 1e-6;
            let mut p = base.clone();
            p[k] += h;
            net.load_flat(&p);
            let up = loss(&net);
            p[k] -= 2.0 * h;
            net.load_flat(&p);
            let down = loss(&net);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "coordinate {k}");
        }
    }

    #[test]
    fn sizes_round_trip() {
        assert_eq!(Mlp::zeros(&[4, 8, 8, 1]).sizes(), vec![4, 8, 8, 1]);
    }
}
