//! Input/output scaling shared by training, sampling and the baselines.
//!
//! `x` is z-scored; `y` is min-max mapped to `[-1, 1]` per dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;

/// Mean and standard deviation of a scalar feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarStats {
    pub mean: f64,
    pub std: f64,
}

impl ScalarStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        ScalarStats {
            mean,
            std: positive_std(var.sqrt()),
        }
    }

    pub fn z(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

/// Statistics for the two extra condition entries (objective value and
/// total constraint violation of the current state).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub objective: ScalarStats,
    pub violation: ScalarStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentStats>,
}

/// Clip for z-scored augmentation entries, which can be unbounded on noisy states.
const AUGMENT_CLIP: f64 = 10.0;

impl Normalizer {
    /// Fit from raw rows. Degenerate dimensions get unit spread.
    pub fn fit(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Self {
        let dx = xs.first().map_or(0, Vec::len);
        let dy = ys.first().map_or(0, Vec::len);
        let n = xs.len().max(1) as f64;
        let mut x_mean = vec![0.0; dx];
        for x in xs {
            for (m, v) in x_mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut x_var = vec![0.0; dx];
        for x in xs {
            for ((s, v), m) in x_var.iter_mut().zip(x).zip(&x_mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let x_std = x_var.into_iter().map(|v| positive_std(v.sqrt())).collect();
        let mut y_min = vec![f64::INFINITY; dy];
        let mut y_max = vec![f64::NEG_INFINITY; dy];
        for y in ys {
            for (j, &v) in y.iter().enumerate() {
                y_min[j] = y_min[j].min(v);
                y_max[j] = y_max[j].max(v);
            }
        }
        for j in 0..dy {
            if !(y_max[j] > y_min[j]) {
                y_max[j] = y_min[j] + 1.0;
            }
        }
        Normalizer {
            x_mean,
            x_std,
            y_min,
            y_max,
            augment: None,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn y_dim(&self) -> usize {
        self.y_min.len()
    }

    pub fn encode_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.x_mean.iter().zip(&self.x_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn encode_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.y_min.iter().zip(&self.y_max))
            .map(|(v, (lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn decode_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.y_min.iter().zip(&self.y_max))
            .map(|(v, (lo, hi))| lo + (v + 1.0) * 0.5 * (hi - lo))
            .collect()
    }
}

/// Network condition vector for instance `x`.
///
/// Without augmentation this is the z-scored `x`. With augmentation the
/// objective and total constraint violation of `y_current` (a raw,
/// denormalized solution) are appended, each z-scored by the stored stats.
/// The objective is taken at the feasible projection of `y_current` so that it
/// stays finite; the violation is measured on `y_current` itself.
pub fn encode_condition(
    spec: &ProblemSpec,
    norm: &Normalizer,
    x: &[f64],
    augment: bool,
    y_current: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if norm.x_dim() != spec.x_dim {
        return Err(Error::config(format!(
            "normalization stats cover {} inputs, problem has {}",
            norm.x_dim(),
            spec.x_dim
        )));
    }
    spec.check_dims(x, None)?;
    let mut cond = norm.encode_x(x);
    if augment {
        let stats = norm
            .augment
            .ok_or_else(|| Error::config("augmented condition requested without augmentation stats"))?;
        let y = y_current.ok_or_else(|| Error::input("augmented condition needs a current solution"))?;
        spec.check_dims(x, Some(y))?;
        let (f, viol) = augment_features(spec, x, y);
        cond.push(stats.objective.z(f).clamp(-AUGMENT_CLIP, AUGMENT_CLIP));
        cond.push(stats.violation.z(viol).clamp(-AUGMENT_CLIP, AUGMENT_CLIP));
    }
    Ok(cond)
}

/// Raw (objective, violation) pair used by augmented conditions.
pub fn augment_features(spec: &ProblemSpec, x: &[f64], y: &[f64]) -> (f64, f64) {
    let projected = spec.project_feasible(x, y);
    let f = spec.evaluate(x, &projected);
    let f = if f.is_finite() { f } else { 0.0 };
    let viol = spec.total_violation(x, y);
    let viol = if viol.is_finite() { viol } else { 0.0 };
    (f, viol)
}

fn positive_std(s: f64) -> f64 {
    if s.is_finite() && s > 1e-12 {
        s
    } else {
        1.0
    }
}
