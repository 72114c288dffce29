use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::model::{GdmMeta, GdmModel, GDM_FORMAT};
use super::{forward_noising, NoiseSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::neural::{
    condition_row, ema_update, time_embedding, DenoiserArch, DenoiserParams, NetBatch, TrainState,
};
use crate::normalize::{augment_features, encode_condition, AugmentStats, Normalizer, ScalarStats};
use crate::oracle::Dataset;
use crate::problems::ProblemSpec;

const TRAIN_STREAM: u64 = 0;
const STATS_STREAM: u64 = 1;

/// Fit an ε-predictor on `(x, y*)` pairs.
///
/// Each minibatch draws a step `t` uniformly from `1..=T` and Gaussian noise
/// per row, and replaces the condition with the null token with probability
/// `p_uncond`. The loss is the mean squared noise error. Adam updates the live
/// weights and the EMA copy follows after every step.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<GdmModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    let spec = data.spec().clone();
    let m = &data.manifest;
    if m.x_dim != spec.x_dim || m.y_dim != spec.y_dim {
        return Err(Error::input("dataset dimensions disagree with its problem"));
    }
    for row in &data.rows {
        spec.check_dims(&row.x, Some(&row.y_star))?;
    }
    let schedule = NoiseSchedule::cosine(cfg.steps)?;
    let mut norm = m.normalizer();
    if cfg.cond_terms {
        norm.augment = Some(augment_stats(&spec, &norm, data, &schedule, cfg.seed));
    }
    let cond_dim = spec.x_dim + if cfg.cond_terms { 2 } else { 0 };
    let arch = DenoiserArch::new(spec.y_dim, cond_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_STREAM);
    let mut params = DenoiserParams::init(&arch, &mut rng);
    let mut state = TrainState::new(&params.live, cfg.lr, cfg.gamma, cfg.milestones.clone());

    let y0: Vec<Vec<f64>> = data.rows.iter().map(|r| norm.encode_y(&r.y_star)).collect();
    let plain_cond: Vec<Vec<f64>> = data.rows.iter().map(|r| norm.encode_x(&r.x)).collect();
    let t_table: Vec<Vec<f64>> = (0..=cfg.steps).map(|t| time_embedding(t, arch.time_dim)).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut y_t = Array2::zeros((b, arch.y_dim));
            let mut t_emb = Array2::zeros((b, arch.time_dim));
            let mut cond = Array2::zeros((b, cond_dim + 1));
            let mut eps = Array2::zeros((b, arch.y_dim));
            for (r, &i) in chunk.iter().enumerate() {
                let t = rng.random_range(1..=cfg.steps);
                let noise: Vec<f64> = (0..arch.y_dim).map(|_| rng.sample(StandardNormal)).collect();
                let noisy = forward_noising(&y0[i], t, &noise, &schedule);
                let drop = rng.random::<f64>() < cfg.p_uncond;
                let c = if drop {
                    None
                } else if cfg.cond_terms {
                    let raw = norm.decode_y(&noisy);
                    Some(encode_condition(&spec, &norm, &data.rows[i].x, true, Some(&raw))?)
                } else {
                    Some(plain_cond[i].clone())
                };
                let row = condition_row(c.as_deref(), cond_dim);
                for j in 0..arch.y_dim {
                    y_t[[r, j]] = noisy[j];
                    eps[[r, j]] = noise[j];
                }
                for (j, v) in t_table[t].iter().enumerate() {
                    t_emb[[r, j]] = *v;
                }
                for (j, v) in row.iter().enumerate() {
                    cond[[r, j]] = *v;
                }
            }
            let batch = NetBatch { y_t, t_emb, cond };
            let (loss, grad) = params.live.loss_and_grad(&batch, &eps);
            state.adam_step(&mut params.live, &grad);
            ema_update(&mut params.ema, &params.live, cfg.ema_decay);
            total += loss * b as f64;
        }
        loss_history.push(total / data.len() as f64);
        state.end_epoch();
    }

    Ok(GdmModel {
        meta: GdmMeta {
            format: GDM_FORMAT.to_string(),
            problem: spec,
            arch,
            normalizer: norm,
            train: cfg.clone(),
            loss_history,
            n_train: data.len(),
            config: serde_json::Value::Null,
        },
        params,
        schedule,
    })
}

/// Z-score statistics of the (objective, violation) features over noisy
/// training states, one random step per row.
fn augment_stats(
    spec: &ProblemSpec,
    norm: &Normalizer,
    data: &Dataset,
    schedule: &NoiseSchedule,
    seed: u64,
) -> AugmentStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STATS_STREAM);
    let mut objective = Vec::with_capacity(data.len());
    let mut violation = Vec::with_capacity(data.len());
    for row in &data.rows {
        let y0 = norm.encode_y(&row.y_star);
        let t = rng.random_range(0..=schedule.steps());
        let y = if t == 0 {
            y0
        } else {
            let noise: Vec<f64> = (0..y0.len()).map(|_| rng.sample(StandardNormal)).collect();
            forward_noising(&y0, t, &noise, schedule)
        };
        let (f, v) = augment_features(spec, &row.x, &norm.decode_y(&y));
        objective.push(f);
        violation.push(v);
    }
    AugmentStats {
        objective: ScalarStats::from_values(&objective),
        violation: ScalarStats::from_values(&violation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Parameters;
    use crate::oracle::OracleConfig;
    use crate::problems::ProblemKind;

    fn small(kind: ProblemKind, n: usize) -> Dataset {
        Dataset::generate(&ProblemSpec::new(kind), n, 3, OracleConfig::default(), 1).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let data = small(ProblemKind::Msr3, 20);
        let model = train(&data, &quick(0)).unwrap();
        let arch = model.meta.arch;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        rng.set_stream(TRAIN_STREAM);
        assert_eq!(model.params, DenoiserParams::init(&arch, &mut rng));
        assert!(model.meta.loss_history.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let data = small(ProblemKind::Msr3, 40);
        let a = train(&data, &quick(2)).unwrap();
        let b = train(&data, &quick(2)).unwrap();
        assert_eq!(a.params.flatten(), b.params.flatten());
        assert_eq!(a.meta.loss_history, b.meta.loss_history);
        let c = train(&data, &TrainConfig { seed: 1, ..quick(2) }).unwrap();
        assert_ne!(a.params.flatten(), c.params.flatten());
    }

    #[test]
    fn always_unconditional_never_moves_condition_weights() {
        let data = small(ProblemKind::Msr3, 40);
        let init = train(&data, &TrainConfig { p_uncond: 1.0, ..quick(0) }).unwrap();
        let model = train(&data, &TrainConfig { p_uncond: 1.0, ..quick(2) }).unwrap();
        assert_eq!(model.params.live.cond_embed.w, init.params.live.cond_embed.w);
        assert_ne!(model.params.live.fusion.w, init.params.live.fusion.w);
    }

    #[test]
    fn augmented_condition_trains_and_records_stats() {
        let data = small(ProblemKind::Co, 30);
        let model = train(&data, &TrainConfig { cond_terms: true, ..quick(1) }).unwrap();
        assert_eq!(model.meta.arch.cond_dim, 14);
        assert!(model.meta.normalizer.augment.is_some());
        assert!(model.params.all_finite());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let data = small(ProblemKind::Msr3, 5).head(0);
        assert!(matches!(train(&data, &quick(1)), Err(Error::Input(_))));
    }
}
