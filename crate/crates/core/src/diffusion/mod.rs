//! Denoising diffusion over solution vectors: cosine noise schedule, training
//! of the ε-predictor with condition dropout, and guided reverse sampling.

mod model;
mod sample;
mod schedule;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::EMA_DECAY;

pub use model::{GdmMeta, GdmModel, GDM_FORMAT};
pub use sample::{
    cfg_epsilon, reverse_step, reverse_update, sample, sample_chains, write_trajectories, TraceStep,
    Trajectory,
};
pub use schedule::{forward_noising, NoiseSchedule};
pub use train::train;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of diffusion steps `T`.
    #[serde(rename = "T", alias = "steps")]
    pub steps: usize,
    /// Probability of replacing the condition with the null token.
    pub p_uncond: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Epoch counts after which the learning rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub ema_decay: f64,
    pub seed: u64,
    /// Append the current objective and constraint violation to the condition.
    pub cond_terms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20,
            p_uncond: 0.1,
            epochs: 200,
            lr: 0.005,
            milestones: vec![100, 150],
            gamma: 0.1,
            batch_size: 128,
            ema_decay: EMA_DECAY,
            seed: 0,
            cond_terms: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::input(format!("T must be at least 2, got {}", self.steps)));
        }
        if !(0.0..=1.0).contains(&self.p_uncond) {
            return Err(Error::input(format!("p_uncond must lie in [0, 1], got {}", self.p_uncond)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::input(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::input(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::input(format!("EMA decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}

/// Noise scale used in the reverse update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Coefficient `(1 − ᾱ_{t−1}) / (1 − ᾱ_t)`.
    #[default]
    PaperEq13,
    /// Posterior standard deviation `√β̃_t`.
    DdpmPosterior,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_eq13" => Ok(VarianceMode::PaperEq13),
            "ddpm_posterior" => Ok(VarianceMode::DdpmPosterior),
            other => Err(Error::input(format!(
                "unknown variance mode '{other}' (expected paper_eq13 or ddpm_posterior)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Guidance strength.
    pub omega: f64,
    /// Independent chains; the best projected solution is returned.
    pub num_samples: usize,
    /// Leading reverse steps in which over-dispersed states are standardized.
    pub normalize_first_k: usize,
    pub variance_mode: VarianceMode,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            omega: 500.0,
            num_samples: 1,
            normalize_first_k: 5,
            variance_mode: VarianceMode::PaperEq13,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self, steps: usize) -> Result<()> {
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::input(format!("omega must be non-negative, got {}", self.omega)));
        }
        if self.num_samples == 0 {
            return Err(Error::input("num_samples must be at least 1"));
        }
        if self.normalize_first_k > steps {
            return Err(Error::input(format!(
                "normalize_first_k = {} exceeds T = {steps}",
                self.normalize_first_k
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let t = TrainConfig::default();
        assert_eq!((t.steps, t.epochs, t.milestones.clone()), (20, 200, vec![100, 150]));
        assert_eq!((t.p_uncond, t.lr, t.gamma, t.ema_decay), (0.1, 0.005, 0.1, 0.999));
        let s = SampleConfig::default();
        assert_eq!((s.omega, s.num_samples, s.normalize_first_k), (500.0, 1, 5));
        assert_eq!(s.variance_mode, VarianceMode::PaperEq13);
    }

    #[test]
    fn validation() {
        let bad = TrainConfig {
            p_uncond: 1.5,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Input(_))));
        let bad = TrainConfig {
            steps: 1,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let s = SampleConfig {
            normalize_first_k: 21,
            ..SampleConfig::default()
        };
        assert!(s.validate(20).is_err());
        assert!(SampleConfig::default().validate(20).is_ok());
    }

    #[test]
    fn config_json_uses_t_key_and_rejects_unknown() {
        let c: TrainConfig = serde_json::from_str(r#"{"T": 7, "epochs": 3}"#).unwrap();
        assert_eq!((c.steps, c.epochs, c.lr), (7, 3, 0.005));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
        let s: SampleConfig = serde_json::from_str(r#"{"variance_mode": "ddpm_posterior"}"#).unwrap();
        assert_eq!(s.variance_mode, VarianceMode::DdpmPosterior);
    }
}
