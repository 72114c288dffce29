use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NoiseSchedule, TrainConfig};
use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::error::{Error, Result};
use crate::neural::{DenoiserArch, DenoiserParams, Parameters};
use crate::normalize::Normalizer;
use crate::problems::ProblemSpec;

pub const GDM_FORMAT: &str = "gdm-1";

/// Everything needed to sample from a trained model, apart from the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdmMeta {
    pub format: String,
    pub problem: ProblemSpec,
    pub arch: DenoiserArch,
    pub normalizer: Normalizer,
    pub train: TrainConfig,
    /// Mean per-sample loss of each epoch.
    pub loss_history: Vec<f64>,
    pub n_train: usize,
    /// Free-form provenance (effective command-line configuration).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdmModel {
    pub meta: GdmMeta,
    pub params: DenoiserParams,
    pub schedule: NoiseSchedule,
}

impl GdmModel {
    pub fn spec(&self) -> &ProblemSpec {
        &self.meta.problem
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.meta.loss_history.last().copied()
    }

    /// Writes `<stem>.ckpt.json` and `<stem>.ckpt.bin`; returns the JSON path.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        write_checkpoint(path, &self.meta, &self.params.flatten())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<GdmModel> {
        let path = path.as_ref();
        let (meta, flat): (GdmMeta, _) = read_checkpoint(path, |m: &GdmMeta| {
            2 * crate::neural::DenoiserNet::zeros(&m.arch).num_params()
        })?;
        if meta.format != GDM_FORMAT {
            return Err(Error::format(path, format!("not a diffusion checkpoint: '{}'", meta.format)));
        }
        if meta.arch.y_dim != meta.problem.y_dim || meta.normalizer.x_dim() != meta.problem.x_dim {
            return Err(Error::format(path, "checkpoint shapes disagree with its problem"));
        }
        let net = crate::neural::DenoiserNet::zeros(&meta.arch);
        let mut params = DenoiserParams {
            live: net.clone(),
            ema: net,
        };
        params.load_flat(&flat);
        let schedule = NoiseSchedule::cosine(meta.train.steps)?;
        Ok(GdmModel {
            meta,
            params,
            schedule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{sample, train, SampleConfig};
    use crate::oracle::{Dataset, OracleConfig};
    use crate::problems::ProblemKind;

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let spec = ProblemSpec::new(ProblemKind::Nu);
        let data = Dataset::generate(&spec, 12, 2, OracleConfig::default(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 4,
            cond_terms: true,
            ..TrainConfig::default()
        };
        let model = train(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let json = model.save(dir.path().join("m")).unwrap();
        assert!(json.ends_with("m.ckpt.json"));
        let back = GdmModel::load(&json).unwrap();
        assert_eq!(back, model);
        let s = SampleConfig::default();
        assert_eq!(
            sample(&model, &data.rows[0].x, &s).unwrap(),
            sample(&back, &data.rows[0].x, &s).unwrap()
        );
        std::fs::write(dir.path().join("m.ckpt.bin"), [0u8; 16]).unwrap();
        assert_eq!(GdmModel::load(&json).unwrap_err().exit_code(), 2);
    }
}
