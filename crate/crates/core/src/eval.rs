//! Exceed ratio, per-method evaluation on a labelled test split, and
//! hyperparameter sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{gd_solve, mtfnn_predict, GdConfig, MtfnnModel};
use crate::diffusion::{sample, train, GdmModel, SampleConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::oracle::{solve, Dataset, OracleConfig};
use crate::problems::{ProblemSpec, Solution};

/// `f(x, y) / f(x, y_true)`.
pub fn exceed_ratio(spec: &ProblemSpec, x: &[f64], y: &[f64], y_true: &[f64]) -> Result<f64> {
    spec.check_dims(x, Some(y))?;
    spec.check_dims(x, Some(y_true))?;
    let reference = spec.evaluate(x, y_true);
    if reference == 0.0 || !reference.is_finite() {
        return Err(Error::UndefinedMetric(format!(
            "reference objective is {reference}; the ratio is undefined"
        )));
    }
    Ok(spec.evaluate(x, y) / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gdm,
    Gd,
    Mtfnn,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gdm => "gdm",
            Method::Gd => "gd",
            Method::Mtfnn => "mtfnn",
            Method::Oracle => "oracle",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gdm" => Ok(Method::Gdm),
            "gd" => Ok(Method::Gd),
            "mtfnn" => Ok(Method::Mtfnn),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::input(format!("unknown method '{other}' (expected gdm, gd, mtfnn or oracle)"))),
        }
    }
}

/// Trained models available to [`evaluate_model`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Artifacts<'a> {
    pub gdm: Option<&'a GdmModel>,
    pub mtfnn: Option<&'a MtfnnModel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Sampling settings; instance `i` samples with seed `sample.seed + i`.
    pub sample: SampleConfig,
    pub gd: GdConfig,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub problem: String,
    pub n_instances: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub ratios: Vec<f64>,
    pub wall_clock_s: f64,
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mean = values.iter().sum::<f64>() / n as f64;
    (mean, median, sorted[0], sorted[n - 1])
}

/// Solve every test instance with `method` and score it against the stored
/// optimum.
pub fn evaluate_model(
    method: Method,
    test: &Dataset,
    artifacts: &Artifacts,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    let spec = test.spec();
    let started = Instant::now();
    let check = |problem: &ProblemSpec| {
        if problem != spec {
            Err(Error::input(format!(
                "model was trained for {}, test data is {}",
                problem.name, spec.name
            )))
        } else {
            Ok(())
        }
    };
    let solver: Box<dyn Fn(usize, &[f64]) -> Result<Solution> + Sync> = match method {
        Method::Gdm => {
            let model = artifacts
                .gdm
                .ok_or_else(|| Error::config("method gdm needs a diffusion checkpoint"))?;
            check(model.spec())?;
            let base = settings.sample.clone();
            Box::new(move |i, x| {
                let cfg = SampleConfig {
                    seed: base.seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                Ok(sample(model, x, &cfg)?.0)
            })
        }
        Method::Mtfnn => {
            let model = artifacts
                .mtfnn
                .ok_or_else(|| Error::config("method mtfnn needs a regressor checkpoint"))?;
            check(model.spec())?;
            Box::new(move |_, x| mtfnn_predict(model, x))
        }
        Method::Gd => {
            let cfg = settings.gd.clone();
            Box::new(move |_, x| gd_solve(spec, x, &cfg))
        }
        Method::Oracle => {
            let cfg = settings.oracle;
            Box::new(move |_, x| {
                solve(spec, x, &cfg)?
                    .map(|s| s.y_star)
                    .ok_or_else(|| Error::input("oracle found no feasible point"))
            })
        }
    };
    let ratios = test
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let y = solver(i, &row.x)?;
            exceed_ratio(spec, &row.x, &y, &row.y_star)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, median, min, max) = summarize(&ratios);
    Ok(EvalReport {
        method,
        problem: spec.name.to_string(),
        n_instances: ratios.len(),
        mean,
        median,
        min,
        max,
        ratios,
        wall_clock_s: started.elapsed().as_secs_f64(),
        config: serde_json::to_value(settings).unwrap_or_default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "omega")]
    Omega,
    #[serde(rename = "T")]
    Steps,
    #[serde(rename = "p_uncond")]
    PUncond,
    #[serde(rename = "cond_terms")]
    CondTerms,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Omega => "omega",
            Axis::Steps => "T",
            Axis::PUncond => "p_uncond",
            Axis::CondTerms => "cond_terms",
        }
    }

    pub fn retrains(self) -> bool {
        self != Axis::Omega
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Axis::Omega),
            "T" | "t" => Ok(Axis::Steps),
            "p_uncond" => Ok(Axis::PUncond),
            "cond_terms" => Ok(Axis::CondTerms),
            other => Err(Error::input(format!(
                "unknown ablation axis '{other}' (expected omega, T, p_uncond or cond_terms)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub train: TrainConfig,
    pub sample: SampleConfig,
    /// One repeat per seed; each seeds both training and sampling.
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            train: TrainConfig::default(),
            sample: SampleConfig::default(),
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: f64,
    /// Mean over seeds of the per-seed mean exceed ratio.
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Mean over seeds of the last-epoch training loss; absent when the
    /// checkpoint is reused.
    pub final_loss: Option<f64>,
    pub seed_ratios: Vec<f64>,
    pub seed_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: Axis,
    pub problem: String,
    pub n_train: usize,
    pub n_test: usize,
    pub rows: Vec<AblationRow>,
    pub config: serde_json::Value,
}

impl AblationTable {
    /// Columns: `value,mean_ratio,min_ratio,max_ratio,final_loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,mean_ratio,min_ratio,max_ratio,final_loss\n");
        for r in &self.rows {
            let loss = r.final_loss.map_or(String::new(), |l| format!("{l:e}"));
            writeln!(out, "{},{:e},{:e},{:e},{}", r.value, r.mean_ratio, r.min_ratio, r.max_ratio, loss).unwrap();
        }
        out
    }

    /// Writes the CSV to `path` and the full table, including the echoed
    /// configuration, next to it as `<path>.json`.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".json");
        write_json(sidecar, self)
    }
}

/// Sweep one hyperparameter. The omega axis samples a single checkpoint
/// (`checkpoint`, or one trained with the first seed); the other axes train a
/// fresh model per value and seed. `cond_terms` values are read as booleans
/// (non-zero means on).
pub fn run_ablation(
    axis: Axis,
    values: &[f64],
    train_set: &Dataset,
    test: &Dataset,
    cfg: &AblationConfig,
    checkpoint: Option<&GdmModel>,
) -> Result<AblationTable> {
    if values.is_empty() {
        return Err(Error::input("ablation needs at least one value"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::input("ablation needs at least one seed"));
    }
    if train_set.spec() != test.spec() {
        return Err(Error::input("training and test data describe different problems"));
    }
    let shared = match (axis, checkpoint) {
        (Axis::Omega, Some(m)) => Some(m.clone()),
        (Axis::Omega, None) => Some(train(
            train_set,
            &TrainConfig {
                seed: cfg.seeds[0],
                ..cfg.train.clone()
            },
        )?),
        _ => None,
    };
    let cells: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(v, seed)| -> Result<(f64, Option<f64>)> {
            let value = values[v];
            let mut tcfg = TrainConfig { seed, ..cfg.train.clone() };
            let mut scfg = SampleConfig { seed, ..cfg.sample.clone() };
            match axis {
                Axis::Omega => scfg.omega = value,
                Axis::Steps => tcfg.steps = as_count(value)?,
                Axis::PUncond => tcfg.p_uncond = value,
                Axis::CondTerms => tcfg.cond_terms = value != 0.0,
            }
            if scfg.normalize_first_k > tcfg.steps {
                scfg.normalize_first_k = tcfg.steps;
            }
            let owned;
            let model = match &shared {
                Some(m) => m,
                None => {
                    owned = train(train_set, &tcfg)?;
                    &owned
                }
            };
            let settings = EvalSettings {
                sample: scfg,
                ..EvalSettings::default()
            };
            let report = evaluate_model(
                Method::Gdm,
                test,
                &Artifacts {
                    gdm: Some(model),
                    mtfnn: None,
                },
                &settings,
            )?;
            Ok((report.mean, axis.retrains().then(|| model.final_loss()).flatten()))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = cfg.seeds.len();
    let rows = values
        .iter()
        .enumerate()
        .map(|(v, &value)| {
            let cell = &results[v * k..(v + 1) * k];
            let seed_ratios: Vec<f64> = cell.iter().map(|c| c.0).collect();
            let seed_losses: Vec<f64> = cell.iter().filter_map(|c| c.1).collect();
            let (mean_ratio, _, min_ratio, max_ratio) = summarize(&seed_ratios);
            AblationRow {
                value,
                mean_ratio,
                min_ratio,
                max_ratio,
                final_loss: (!seed_losses.is_empty()).then(|| summarize(&seed_losses).0),
                seed_ratios,
                seed_losses,
            }
        })
        .collect();
    Ok(AblationTable {
        axis,
        problem: test.spec().name.to_string(),
        n_train: train_set.len(),
        n_test: test.len(),
        rows,
        config: serde_json::to_value(cfg).unwrap_or_default(),
    })
}

fn as_count(v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
        Ok(v as usize)
    } else {
        Err(Error::input(format!("T must be a whole number, got {v}")))
    }
}
