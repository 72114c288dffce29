use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Fully connected layer `z = x Wᵀ + b`, `W` stored `(out, in)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Uniform `±1/√fan_in` initialization for weights and biases.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).unwrap();
        Dense {
            w: Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(rng)),
            b: Array1::from_shape_simple_fn(fan_out, || dist.sample(rng)),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_out, fan_in)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Dense::zeros(self.fan_in(), self.fan_out())
    }

    pub fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.w.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulate parameter gradients into `grad` and return `∂L/∂x`.
    pub fn backward(&self, x: &Array2<f64>, dz: &Array2<f64>, grad: &mut Dense) -> Array2<f64> {
        grad.w += &dz.t().dot(x);
        grad.b += &dz.sum_axis(Axis(0));
        dz.dot(&self.w)
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `z · sigmoid(z)`.
pub fn silu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v * sigmoid(v))
}

/// `∂L/∂z` for `h = silu(z)` given `∂L/∂h`.
pub fn silu_backward(z: &Array2<f64>, dh: &Array2<f64>) -> Array2<f64> {
    let mut out = dh.clone();
    out.zip_mut_with(z, |g, &v| {
        let s = sigmoid(v);
        *g *= s * (1.0 + v * (1.0 - s));
    });
    out
}

/// Uniform access to every trainable tensor, in declaration order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Flat copy of every value, in declaration order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrite from a flat slice produced by [`Parameters::flatten`].
    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

impl Parameters for Vec<Dense> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().flat_map(Dense::tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(Dense::tensors_mut).collect()
    }
}

/// `ema ← d·ema + (1 − d)·live`, tensor by tensor.
pub fn ema_update<P: Parameters>(ema: &mut P, live: &P, decay: f64) {
    for (e, l) in ema.tensors_mut().into_iter().zip(live.tensors()) {
        for (e, &l) in e.iter_mut().zip(l) {
            *e = decay * *e + (1.0 - decay) * l;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silu_derivative_matches_difference() {
        let z = Array2::from_shape_vec((1, 5), vec![-4.0, -0.5, 0.0, 0.7, 3.0]).unwrap();
        let dh = Array2::ones((1, 5));
        let analytic = silu_backward(&z, &dh);
        for j in 0..5 {
            let h = 1e-6;
            let f = |v: f64| v * sigmoid(v);
            let fd = (f(z[[0, j]] + h) - f(z[[0, j]] - h)) / (2.0 * h);
            assert!((fd - analytic[[0, j]]).abs() < 1e-8);
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
