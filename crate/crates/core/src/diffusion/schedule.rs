use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset of the cosine schedule; keeps `ᾱ` away from 1 near `t = 0`.
const COSINE_OFFSET: f64 = 0.008;
const ALPHA_MIN: f64 = 0.001;
const ALPHA_MAX: f64 = 0.9999;

/// Per-step retention factors `α_t` and their running products `ᾱ_t`,
/// `t = 1..=T`. `ᾱ_0 = 1` by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    steps: usize,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine schedule: target `ᾱ_t = f(t)/f(0)` with
    /// `f(u) = cos²(((u/T + s)/(1 + s))·π/2)`, `s = 0.008`. The per-step ratios are
    /// clipped to `[0.001, 0.9999]` and `ᾱ` is rebuilt as their running
    /// product so the two stay exactly consistent.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::input(format!("diffusion needs T >= 2, got {steps}")));
        }
        let f = |u: f64| {
            let angle = (u / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)
                * std::f64::consts::FRAC_PI_2;
            angle.cos().powi(2)
        };
        let target = |t: usize| f(t as f64) / f(0.0);
        let alpha: Vec<f64> = (1..=steps)
            .map(|t| (target(t) / target(t - 1)).clamp(ALPHA_MIN, ALPHA_MAX))
            .collect();
        let alpha_bar = alpha
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(NoiseSchedule {
            steps,
            alpha,
            alpha_bar,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `α_t`, `1 ≤ t ≤ T`.
    pub fn alpha(&self, t: usize) -> f64 {
        assert!((1..=self.steps).contains(&t), "step {t} outside 1..={}", self.steps);
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, `0 ≤ t ≤ T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        assert!(t <= self.steps, "step {t} outside 0..={}", self.steps);
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }
}

/// `y_t = √ᾱ_t · y_0 + √(1 − ᾱ_t) · ε`.
pub fn forward_noising(y0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Vec<f64> {
    assert!(t >= 1, "forward noising starts at t = 1");
    let ab = sched.alpha_bar(t);
    let (keep, noise) = (ab.sqrt(), (1.0 - ab).sqrt());
    y0.iter().zip(eps).map(|(y, e)| keep * y + noise * e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let s = NoiseSchedule::cosine(20).unwrap();
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(20) < 0.01);
        for t in 1..=20 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(NoiseSchedule::cosine(1).is_err());
    }

    #[test]
    fn noising_limits() {
        let s = NoiseSchedule::cosine(1000).unwrap();
        let y = forward_noising(&[0.5, -0.25], 1, &[0.0, 0.0], &s);
        assert!((y[0] - 0.5).abs() < 1e-4 && (y[1] + 0.25).abs() < 1e-4);
        let s = NoiseSchedule::cosine(20).unwrap();
        let y = forward_noising(&[0.0, 0.0], 7, &[1.0, -2.0], &s);
        let k = (1.0 - s.alpha_bar(7)).sqrt();
        assert_eq!(y, vec![k, -2.0 * k]);
    }
}
