use serde::{Deserialize, Serialize};

use super::dense::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: bias-corrected Adam moments plus a multi-step learning
/// rate that is multiplied by `gamma` when a milestone epoch completes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub milestones: Vec<usize>,
    pub hyper: AdamHyper,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl TrainState {
    pub fn new<P: Parameters>(params: &P, lr: f64, gamma: f64, milestones: Vec<usize>) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        TrainState {
            step: 0,
            epoch: 0,
            lr,
            gamma,
            milestones,
            hyper: AdamHyper::default(),
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn adam_step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let correct1 = 1.0 - beta1.powi(self.step as i32);
        let correct2 = 1.0 - beta2.powi(self.step as i32);
        let lr = self.lr;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            assert_eq!(p.len(), g.len(), "gradient shape mismatch");
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / correct1;
                let v_hat = v[i] / correct2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Mark an epoch as finished, decaying the rate at milestones.
    pub fn end_epoch(&mut self) {
        self.epoch += 1;
        if self.milestones.contains(&self.epoch) {
            self.lr *= self.gamma;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Dense;

    fn one_param(v: f64) -> Vec<Dense> {
        let mut d = Dense::zeros(1, 1);
        d.w[[0, 0]] = v;
        vec![d]
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = one_param(1.5);
        let g = one_param(0.0);
        let mut st = TrainState::new(&p, 0.01, 0.1, vec![]);
        for _ in 0..10 {
            st.adam_step(&mut p, &g);
        }
        assert_eq!(p[0].w[[0, 0]], 1.5);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut p = one_param(0.0);
        let g = one_param(3.0);
        let lr = 0.005;
        let mut st = TrainState::new(&p, lr, 0.1, vec![]);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p[0].w[[0, 0]];
            st.adam_step(&mut p, &g);
            last = before - p[0].w[[0, 0]];
        }
        // m̂ = g and v̂ = g² exactly, so each step is lr·g/(|g| + eps).
        assert!((last - lr * 3.0 / (3.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn milestone_decay() {
        let p = one_param(0.0);
        let mut st = TrainState::new(&p, 0.005, 0.1, vec![2, 4]);
        st.end_epoch();
        assert_eq!(st.lr, 0.005);
        st.end_epoch();
        assert!((st.lr - 0.0005).abs() < 1e-18);
        st.end_epoch();
        st.end_epoch();
        assert!((st.lr - 0.00005).abs() < 1e-18);
    }
}
