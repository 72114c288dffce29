use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::GdmModel;
use super::{NoiseSchedule, SampleConfig, VarianceMode};
use crate::error::{Error, Result};
use crate::neural::DenoiserNet;
use crate::normalize::encode_condition;
use crate::problems::{ProblemSpec, Solution};

/// One recorded state: the step index, the projected solution decoded from
/// the chain state, and its objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub objective: f64,
    pub y: Vec<f64>,
}

/// A full reverse chain, from the initial noise at `T` down to step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TraceStep>,
    pub solution: Solution,
    pub objective: f64,
}

impl Trajectory {
    /// Objective of the projected initial noise.
    pub fn initial_objective(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.objective)
    }
}

/// Guided noise estimate `(1 + ω)·ε_cond − ω·ε_null`.
pub fn cfg_epsilon(net: &DenoiserNet, y_t: &[f64], t: usize, cond: &[f64], omega: f64) -> Result<Vec<f64>> {
    let conditional = net.forward(y_t, t, Some(cond))?;
    if omega == 0.0 {
        return Ok(conditional);
    }
    let unconditional = net.forward(y_t, t, None)?;
    Ok(conditional
        .iter()
        .zip(&unconditional)
        .map(|(c, u)| (1.0 + omega) * c - omega * u)
        .collect())
}

/// Reverse update with caller-supplied Gaussian noise `noise` (ignored at
/// `t = 1`).
pub fn reverse_update(
    y_t: &[f64],
    t: usize,
    eps_tilde: &[f64],
    noise: &[f64],
    sched: &NoiseSchedule,
    cfg: &SampleConfig,
) -> Vec<f64> {
    let a = sched.alpha(t);
    let ab = sched.alpha_bar(t);
    let ratio = (1.0 - sched.alpha_bar(t - 1)) / (1.0 - ab);
    let sigma = match cfg.variance_mode {
        VarianceMode::PaperEq13 => ratio,
        VarianceMode::DdpmPosterior => (ratio * (1.0 - a)).sqrt(),
    };
    let mean_coef = (1.0 - a) / (1.0 - ab).sqrt();
    let inv_sqrt_a = 1.0 / a.sqrt();
    let mut out: Vec<f64> = y_t
        .iter()
        .zip(eps_tilde)
        .map(|(y, e)| inv_sqrt_a * (y - mean_coef * e))
        .collect();
    if t > 1 {
        for (o, n) in out.iter_mut().zip(noise) {
            *o += sigma * n;
        }
    }
    if t + cfg.normalize_first_k > sched.steps() {
        standardize_if_spread(&mut out);
    }
    out
}

/// One reverse step, drawing its own noise.
pub fn reverse_step<R: Rng + ?Sized>(
    y_t: &[f64],
    t: usize,
    eps_tilde: &[f64],
    sched: &NoiseSchedule,
    rng: &mut R,
    cfg: &SampleConfig,
) -> Vec<f64> {
    let noise: Vec<f64> = if t > 1 {
        (0..y_t.len()).map(|_| rng.sample(StandardNormal)).collect()
    } else {
        vec![0.0; y_t.len()]
    };
    reverse_update(y_t, t, eps_tilde, &noise, sched, cfg)
}

fn standardize_if_spread(y: &mut [f64]) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std > 1.0 {
        for v in y.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

/// Run `cfg.num_samples` independent chains for instance `x`. Chain `k`
/// draws from stream `k` of `cfg.seed`.
pub fn sample_chains(model: &GdmModel, x: &[f64], cfg: &SampleConfig) -> Result<Vec<Trajectory>> {
    cfg.validate(model.schedule.steps())?;
    model.spec().check_dims(x, None)?;
    (0..cfg.num_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            run_chain(model, x, cfg, &mut rng)
        })
        .collect()
}

/// Best projected solution over `cfg.num_samples` chains, with its trajectory.
pub fn sample(model: &GdmModel, x: &[f64], cfg: &SampleConfig) -> Result<(Solution, Trajectory)> {
    let chains = sample_chains(model, x, cfg)?;
    let spec = model.spec();
    let best = chains
        .into_iter()
        .reduce(|best, c| if strictly_better(spec, c.objective, best.objective) { c } else { best })
        .expect("at least one chain");
    Ok((best.solution.clone(), best))
}

fn strictly_better(spec: &ProblemSpec, a: f64, b: f64) -> bool {
    match (a.is_nan(), b.is_nan()) {
        (true, _) => false,
        (false, true) => true,
        _ => spec.better_sign() * (a - b) > 0.0,
    }
}

fn run_chain(model: &GdmModel, x: &[f64], cfg: &SampleConfig, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let spec = model.spec();
    let norm = &model.meta.normalizer;
    let augment = model.meta.train.cond_terms;
    let net = &model.params.ema;
    let steps = model.schedule.steps();
    let record = |step: usize, y: &[f64]| {
        let raw: Vec<f64> = norm.decode_y(y).into_iter().map(finite_or_zero).collect();
        let solution = spec.project_feasible(x, &raw);
        TraceStep {
            step,
            objective: spec.evaluate(x, &solution),
            y: solution,
        }
    };

    let mut y: Vec<f64> = (0..spec.y_dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(record(steps, &y));
    for t in (1..=steps).rev() {
        let current = augment.then(|| norm.decode_y(&y).into_iter().map(finite_or_zero).collect::<Vec<_>>());
        let cond = encode_condition(spec, norm, x, augment, current.as_deref())?;
        let eps = cfg_epsilon(net, &y, t, &cond, cfg.omega)?;
        y = reverse_step(&y, t, &eps, &model.schedule, rng, cfg);
        trace.push(record(t - 1, &y));
    }
    let last = trace.last().expect("non-empty trace");
    Ok(Trajectory {
        solution: last.y.clone(),
        objective: last.objective,
        steps: trace,
    })
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Write one CSV per chain with columns `step,objective,y0..`. A single
/// chain goes to `path`; several go to `<stem>_chain<k>.<ext>`.
pub fn write_trajectories(path: impl AsRef<Path>, chains: &[Trajectory]) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    if chains.is_empty() {
        return Err(Error::input("no trajectories to write"));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut written = Vec::with_capacity(chains.len());
    for (k, chain) in chains.iter().enumerate() {
        let target = if chains.len() == 1 {
            path.to_path_buf()
        } else {
            let stem = path.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
            let ext = path.extension().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
            path.with_file_name(format!("{stem}_chain{k}.{ext}"))
        };
        let dy = chain.solution.len();
        let mut out = String::from("step,objective");
        for j in 0..dy {
            write!(out, ",y{j}").unwrap();
        }
        out.push('\n');
        for s in &chain.steps {
            write!(out, "{},{:e}", s.step, s.objective).unwrap();
            for v in &s.y {
                write!(out, ",{v:e}").unwrap();
            }
            out.push('\n');
        }
        fs::write(&target, out).map_err(|e| Error::io(&target, e))?;
        written.push(target);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{forward_noising, train, TrainConfig};
    use crate::oracle::{Dataset, OracleConfig};
    use crate::problems::ProblemKind;

    fn tiny_model() -> (GdmModel, Dataset) {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        let data = Dataset::generate(&spec, 30, 11, OracleConfig::default(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 10,
            ..TrainConfig::default()
        };
        (train(&data, &cfg).unwrap(), data)
    }

    #[test]
    fn omega_zero_is_the_conditional_prediction() {
        let (model, data) = tiny_model();
        let net = &model.params.ema;
        let cond = model.meta.normalizer.encode_x(&data.rows[0].x);
        let y = [0.3, -0.7, 1.1];
        let c = net.forward(&y, 9, Some(&cond)).unwrap();
        let e = cfg_epsilon(net, &y, 9, &cond, 0.0).unwrap();
        assert_eq!(
            e.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn guidance_is_affine_in_omega() {
        let (model, data) = tiny_model();
        let net = &model.params.ema;
        let cond = model.meta.normalizer.encode_x(&data.rows[1].x);
        let y = [0.1, 0.2, -0.4];
        let a = cfg_epsilon(net, &y, 4, &cond, 3.0).unwrap();
        let b = cfg_epsilon(net, &y, 4, &cond, 7.0).unwrap();
        let m = cfg_epsilon(net, &y, 4, &cond, 5.0).unwrap();
        for j in 0..3 {
            assert!((a[j] + b[j] - 2.0 * m[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn last_step_ignores_noise() {
        let s = NoiseSchedule::cosine(20).unwrap();
        let cfg = SampleConfig::default();
        let y = [0.5, -0.5];
        let e = [0.1, 0.2];
        assert_eq!(
            reverse_update(&y, 1, &e, &[9.0, 9.0], &s, &cfg),
            reverse_update(&y, 1, &e, &[0.0, 0.0], &s, &cfg)
        );
    }

    #[test]
    fn oracle_denoiser_recovers_the_clean_state() {
        for mode in [VarianceMode::DdpmPosterior, VarianceMode::PaperEq13] {
            let s = NoiseSchedule::cosine(20).unwrap();
            let cfg = SampleConfig {
                normalize_first_k: 0,
                variance_mode: mode,
                ..SampleConfig::default()
            };
            let y0 = [0.25, -0.8, 0.6];
            let mut y = forward_noising(&y0, 20, &[1.3, -0.2, 0.7], &s);
            for t in (1..=20).rev() {
                let k = (1.0 - s.alpha_bar(t)).sqrt();
                let ab = s.alpha_bar(t).sqrt();
                let eps: Vec<f64> = y.iter().zip(&y0).map(|(v, c)| (v - ab * c) / k).collect();
                y = reverse_update(&y, t, &eps, &[0.0; 3], &s, &cfg);
            }
            for j in 0..3 {
                assert!((y[j] - y0[j]).abs() < 1e-9, "{mode:?}: {y:?}");
            }
        }
    }

    #[test]
    fn standardization_only_in_leading_steps_and_only_when_spread() {
        let s = NoiseSchedule::cosine(20).unwrap();
        let cfg = SampleConfig::default();
        let wide = [30.0, -30.0, 0.0];
        let zero = [0.0; 3];
        let early = reverse_update(&wide, 20, &zero, &zero, &s, &cfg);
        let std = (early.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert!((std - 1.0).abs() < 1e-12);
        let late = reverse_update(&wide, 15, &zero, &zero, &s, &cfg);
        assert!(late[0] > 29.0);
        let off = SampleConfig {
            normalize_first_k: 0,
            ..cfg.clone()
        };
        assert!(reverse_update(&wide, 20, &zero, &zero, &s, &off)[0] > 29.0);
        let narrow = [0.1, -0.1, 0.0];
        let kept = reverse_update(&narrow, 16, &zero, &zero, &s, &cfg);
        assert!((kept[0] - 0.1 / s.alpha(16).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_traces_every_step() {
        let (model, data) = tiny_model();
        let cfg = SampleConfig {
            num_samples: 3,
            seed: 4,
            ..SampleConfig::default()
        };
        let x = &data.rows[2].x;
        let (a, ta) = sample(&model, x, &cfg).unwrap();
        let (b, tb) = sample(&model, x, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(ta.steps.len(), 21);
        assert_eq!(ta.steps[0].step, 20);
        assert_eq!(ta.steps[20].step, 0);
        assert!(model.spec().is_feasible(x, &a));
        let chains = sample_chains(&model, x, &cfg).unwrap();
        assert!(chains.iter().all(|c| c.objective <= ta.objective));
        assert!(sample(&model, &[1.0], &cfg).is_err());
    }

    #[test]
    fn trajectory_csv_layout() {
        let (model, data) = tiny_model();
        let dir = tempfile::tempdir().unwrap();
        let chains = sample_chains(
            &model,
            &data.rows[0].x,
            &SampleConfig {
                num_samples: 2,
                ..SampleConfig::default()
            },
        )
        .unwrap();
        let files = write_trajectories(dir.path().join("t.csv"), &chains).unwrap();
        assert_eq!(files.len(), 2);
        assert!(files[1].ends_with("t_chain1.csv"));
        let text = fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,objective,y0,y1,y2");
        assert_eq!(lines.len(), 22);
        assert!(lines[21].starts_with("0,"));
    }
}
