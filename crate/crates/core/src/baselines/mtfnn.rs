use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::error::{Error, Result};
use crate::neural::{sigmoid, Mlp, Parameters, TrainState};
use crate::normalize::Normalizer;
use crate::oracle::Dataset;
use crate::problems::{ProblemSpec, Solution};

pub const MTFNN_FORMAT: &str = "mtfnn-1";
const TRUNK_WIDTH: usize = 256;
const TRUNK_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MtfnnConfig {
    pub epochs: usize,
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MtfnnConfig {
    fn default() -> Self {
        MtfnnConfig {
            epochs: 200,
            lr: 0.005,
            milestones: vec![100, 150],
            gamma: 0.1,
            batch_size: 128,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtfnnMeta {
    pub format: String,
    pub problem: ProblemSpec,
    pub sizes: Vec<usize>,
    pub normalizer: Normalizer,
    pub train: MtfnnConfig,
    pub loss_history: Vec<f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

/// Direct regressor `x ↦ y`: a shared SiLU trunk with one output per solution
/// entry. CO offload indicators are logits trained with cross-entropy; every
/// other entry is regressed in the normalized `[-1, 1]` scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MtfnnModel {
    pub meta: MtfnnMeta,
    pub net: Mlp,
}

impl MtfnnModel {
    pub fn spec(&self) -> &ProblemSpec {
        &self.meta.problem
    }

    /// Targets in network scale: raw indicators for binary entries,
    /// normalized values for the rest.
    fn target(&self, y: &[f64]) -> Vec<f64> {
        let nb = self.spec().binary_dims();
        let mut t = self.meta.normalizer.encode_y(y);
        t[..nb].copy_from_slice(&y[..nb]);
        t
    }

    /// Mean over rows of the summed per-entry loss, with its gradient.
    pub fn loss_and_grad(&self, x: &Array2<f64>, target: &Array2<f64>) -> (f64, Mlp) {
        let rows = x.nrows();
        assert!(rows > 0, "empty batch");
        let nb = self.spec().binary_dims();
        let (out, cache) = self.net.forward_cached(x);
        let mut d_out = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        for ((r, j), &z) in out.indexed_iter() {
            let t = target[[r, j]];
            if j < nb {
                // log(1 + e^z) − t·z, written to stay finite for large |z|.
                loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
                d_out[[r, j]] = (sigmoid(z) - t) / rows as f64;
            } else {
                loss += (z - t).powi(2);
                d_out[[r, j]] = 2.0 * (z - t) / rows as f64;
            }
        }
        (loss / rows as f64, self.net.backward(&cache, &d_out))
    }

    /// Raw (unprojected) network output in problem units.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.spec().check_dims(x, None)?;
        let input = Array2::from_shape_vec((1, x.len()), self.meta.normalizer.encode_x(x)).unwrap();
        let out = self.net.forward(&input).into_raw_vec_and_offset().0;
        let nb = self.spec().binary_dims();
        let mut y = self.meta.normalizer.decode_y(&out);
        for j in 0..nb {
            y[j] = sigmoid(out[j]);
        }
        Ok(y)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        write_checkpoint(path, &self.meta, &self.net.flatten())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MtfnnModel> {
        let path = path.as_ref();
        let (meta, flat): (MtfnnMeta, _) =
            read_checkpoint(path, |m: &MtfnnMeta| Mlp::zeros(&m.sizes).num_params())?;
        if meta.format != MTFNN_FORMAT {
            return Err(Error::format(path, format!("not a regressor checkpoint: '{}'", meta.format)));
        }
        let mut net = Mlp::zeros(&meta.sizes);
        net.load_flat(&flat);
        Ok(MtfnnModel { meta, net })
    }
}

pub fn mtfnn_train(data: &Dataset, cfg: &MtfnnConfig) -> Result<MtfnnModel> {
    if data.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::input("regressor needs a positive batch size and learning rate"));
    }
    let spec = data.spec().clone();
    let mut sizes = vec![spec.x_dim];
    sizes.extend([TRUNK_WIDTH; TRUNK_DEPTH]);
    sizes.push(spec.y_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = MtfnnModel {
        meta: MtfnnMeta {
            format: MTFNN_FORMAT.to_string(),
            problem: spec.clone(),
            sizes: sizes.clone(),
            normalizer: data.manifest.normalizer(),
            train: cfg.clone(),
            loss_history: Vec::with_capacity(cfg.epochs),
            config: serde_json::Value::Null,
        },
        net: Mlp::init(&sizes, &mut rng),
    };
    let xs: Vec<Vec<f64>> = data.rows.iter().map(|r| model.meta.normalizer.encode_x(&r.x)).collect();
    let ys: Vec<Vec<f64>> = data.rows.iter().map(|r| model.target(&r.y_star)).collect();
    let mut state = TrainState::new(&model.net, cfg.lr, cfg.gamma, cfg.milestones.clone());
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = Array2::from_shape_fn((chunk.len(), spec.x_dim), |(r, j)| xs[chunk[r]][j]);
            let t = Array2::from_shape_fn((chunk.len(), spec.y_dim), |(r, j)| ys[chunk[r]][j]);
            let (loss, grad) = model.loss_and_grad(&x, &t);
            state.adam_step(&mut model.net, &grad);
            total += loss * chunk.len() as f64;
        }
        model.meta.loss_history.push(total / data.len() as f64);
        state.end_epoch();
    }
    Ok(model)
}

/// Network output mapped to a feasible solution.
pub fn mtfnn_predict(model: &MtfnnModel, x: &[f64]) -> Result<Solution> {
    let raw = model.predict_raw(x)?;
    Ok(model.spec().project_feasible(x, &raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleConfig;
    use crate::problems::ProblemKind;

    fn data(kind: ProblemKind, n: usize) -> Dataset {
        Dataset::generate(&ProblemSpec::new(kind), n, 8, OracleConfig::default(), 1).unwrap()
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let d = data(ProblemKind::Msr3, 10);
        let cfg = MtfnnConfig {
            epochs: 0,
            seed: 3,
            ..MtfnnConfig::default()
        };
        let m = mtfnn_train(&d, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(m.net, Mlp::init(&[3, 256, 256, 256, 3], &mut rng));
    }

    #[test]
    fn duplicated_batch_has_identical_loss_and_gradient() {
        let d = data(ProblemKind::Co, 6);
        let m = mtfnn_train(&d, &MtfnnConfig { epochs: 0, ..MtfnnConfig::default() }).unwrap();
        let x = Array2::from_shape_fn((6, 12), |(r, j)| m.meta.normalizer.encode_x(&d.rows[r].x)[j]);
        let t = Array2::from_shape_fn((6, 6), |(r, j)| m.target(&d.rows[r].y_star)[j]);
        let x2 = ndarray::concatenate![ndarray::Axis(0), x, x];
        let t2 = ndarray::concatenate![ndarray::Axis(0), t, t];
        let (l1, g1) = m.loss_and_grad(&x, &t);
        let (l2, g2) = m.loss_and_grad(&x2, &t2);
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn prediction_is_deterministic_and_feasible() {
        let d = data(ProblemKind::Co, 40);
        let m = mtfnn_train(&d, &MtfnnConfig { epochs: 2, batch_size: 8, ..MtfnnConfig::default() }).unwrap();
        for row in &d.rows {
            let a = mtfnn_predict(&m, &row.x).unwrap();
            assert_eq!(a, mtfnn_predict(&m, &row.x).unwrap());
            assert!(m.spec().is_feasible(&row.x, &a));
        }
        assert!(mtfnn_predict(&m, &[0.0; 3]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let d = data(ProblemKind::Nu, 8);
        let m = mtfnn_train(&d, &MtfnnConfig { epochs: 1, batch_size: 4, ..MtfnnConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = m.save(dir.path().join("r")).unwrap();
        assert_eq!(MtfnnModel::load(&path).unwrap(), m);
    }
}
