use std::fs;
use std::path::{Path, PathBuf};

use gdmopt::baselines::{mtfnn_train, GdConfig, MtfnnConfig, MtfnnModel, MTFNN_FORMAT};
use gdmopt::bounds::{bound_gap, monte_carlo_bounds, BoundScenario};
use gdmopt::checkpoint::checkpoint_paths;
use gdmopt::diffusion::{
    sample_chains, train as train_gdm, write_trajectories, GdmModel, SampleConfig, TrainConfig, Trajectory,
    VarianceMode, GDM_FORMAT,
};
use gdmopt::eval::{evaluate_model, run_ablation, AblationConfig, Artifacts, Axis, EvalSettings, Method};
use gdmopt::oracle::{Dataset, OracleConfig};
use gdmopt::problems::{ProblemKind, ProblemSpec};
use gdmopt::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{require, resolve};
use crate::{AblateFlags, BoundsFlags, EvalFlags, GenDataFlags, SampleFlags, TraceFlags, TrainFlags};

type Keys = Map<String, Value>;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn echo<T: Serialize>(cfg: &T) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenDataConfig {
    problem: Option<ProblemKind>,
    n: usize,
    seed: u64,
    out: Option<PathBuf>,
    pos_grid: usize,
    pow_grid: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        let oracle = OracleConfig::default();
        GenDataConfig {
            problem: None,
            n: 1000,
            seed: 0,
            out: None,
            pos_grid: oracle.pos_grid,
            pow_grid: oracle.pow_grid,
        }
    }
}

pub fn gen_data(keys: &Keys, flags: &GenDataFlags, workers: usize) -> Result<()> {
    let cfg: GenDataConfig = resolve(keys, flags)?;
    let problem = cfg
        .problem
        .ok_or_else(|| Error::Input("missing required --problem (co, msr3, msr80 or nu)".into()))?;
    let out = require(&cfg.out, "out")?;
    if cfg.pos_grid < 2 || cfg.pow_grid < 2 {
        return Err(Error::Input("oracle lattices need at least 2 points per axis".into()));
    }
    let oracle = OracleConfig {
        pos_grid: cfg.pos_grid,
        pow_grid: cfg.pow_grid,
    };
    let mut data = Dataset::generate(&ProblemSpec::new(problem), cfg.n, cfg.seed, oracle, workers)?;
    data.manifest.config = json!({ "command": "gen-data", "workers": workers, "args": echo(&cfg) });
    data.save(&out)?;
    println!(
        "{}",
        json!({ "out": out, "problem": problem, "n_samples": data.len(), "rejections": data.manifest.rejections })
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    #[default]
    Gdm,
    Mtfnn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainCmdConfig {
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    model: ModelKind,
    #[serde(rename = "T")]
    steps: usize,
    p_uncond: f64,
    epochs: usize,
    lr: f64,
    milestones: Vec<usize>,
    gamma: f64,
    batch_size: usize,
    ema_decay: f64,
    seed: u64,
    cond_terms: bool,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainCmdConfig {
            data: None,
            out: None,
            model: ModelKind::Gdm,
            steps: t.steps,
            p_uncond: t.p_uncond,
            epochs: t.epochs,
            lr: t.lr,
            milestones: t.milestones,
            gamma: t.gamma,
            batch_size: t.batch_size,
            ema_decay: t.ema_decay,
            seed: t.seed,
            cond_terms: t.cond_terms,
        }
    }
}

pub fn train(keys: &Keys, flags: &TrainFlags) -> Result<()> {
    let cfg: TrainCmdConfig = resolve(keys, flags)?;
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    let data = Dataset::load(&data_dir)?;
    let t = &cfg;
    let config = json!({ "command": "train", "args": echo(&cfg) });
    let (written, final_loss) = match cfg.model {
        ModelKind::Gdm => {
            let tc = TrainConfig {
                steps: t.steps,
                p_uncond: t.p_uncond,
                epochs: t.epochs,
                lr: t.lr,
                milestones: t.milestones.clone(),
                gamma: t.gamma,
                batch_size: t.batch_size,
                ema_decay: t.ema_decay,
                seed: t.seed,
                cond_terms: t.cond_terms,
            };
            let mut model = train_gdm(&data, &tc)?;
            model.meta.config = config;
            (model.save(&out)?, model.final_loss())
        }
        ModelKind::Mtfnn => {
            let mc = MtfnnConfig {
                epochs: t.epochs,
                lr: t.lr,
                milestones: t.milestones.clone(),
                gamma: t.gamma,
                batch_size: t.batch_size,
                seed: t.seed,
            };
            let mut model = mtfnn_train(&data, &mc)?;
            model.meta.config = config;
            (model.save(&out)?, model.meta.loss_history.last().copied())
        }
    };
    println!("{}", json!({ "checkpoint": written, "final_loss": final_loss }));
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SampleCmdConfig {
    ckpt: Option<PathBuf>,
    input: Option<Value>,
    data: Option<PathBuf>,
    limit: Option<usize>,
    trace: Option<PathBuf>,
    out: Option<PathBuf>,
    omega: f64,
    num_samples: usize,
    normalize_first_k: usize,
    variance_mode: VarianceMode,
    seed: u64,
}

impl Default for SampleCmdConfig {
    fn default() -> Self {
        let s = SampleConfig::default();
        SampleCmdConfig {
            ckpt: None,
            input: None,
            data: None,
            limit: None,
            trace: None,
            out: None,
            omega: s.omega,
            num_samples: s.num_samples,
            normalize_first_k: s.normalize_first_k,
            variance_mode: s.variance_mode,
            seed: s.seed,
        }
    }
}

impl SampleCmdConfig {
    fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            omega: self.omega,
            num_samples: self.num_samples,
            normalize_first_k: self.normalize_first_k,
            variance_mode: self.variance_mode,
            seed: self.seed,
        }
    }
}

/// `--input` arrives as a string on the command line but may be any JSON
/// value in the config file.
fn parse_instance(input: &Value) -> Result<Vec<f64>> {
    let parsed;
    let value = match input {
        Value::String(s) => {
            parsed = serde_json::from_str::<Value>(s)
                .map_err(|e| Error::Input(format!("--input is not valid JSON: {e}")))?;
            &parsed
        }
        other => other,
    };
    let array = match value {
        Value::Object(m) => m.get("x").ok_or_else(|| Error::Input("--input object needs an \"x\" array".into()))?,
        other => other,
    };
    serde_json::from_value(array.clone()).map_err(|_| Error::Input("--input must be an array of numbers".into()))
}

fn best_chain(spec: &ProblemSpec, chains: Vec<Trajectory>) -> Trajectory {
    chains
        .into_iter()
        .reduce(|best, c| {
            let better = !c.objective.is_nan()
                && (best.objective.is_nan() || spec.better_sign() * (c.objective - best.objective) > 0.0);
            if better {
                c
            } else {
                best
            }
        })
        .expect("at least one chain")
}

pub fn sample(keys: &Keys, flags: &SampleFlags) -> Result<()> {
    let cfg: SampleCmdConfig = resolve(keys, flags)?;
    let model = GdmModel::load(require(&cfg.ckpt, "ckpt")?)?;
    let sc = cfg.sample_config();
    sc.validate(model.schedule.steps())?;
    let spec = model.spec().clone();
    match (&cfg.input, &cfg.data) {
        (Some(input), None) => {
            let x = parse_instance(input)?;
            let chains = sample_chains(&model, &x, &sc)?;
            if let Some(trace) = &cfg.trace {
                write_trajectories(trace, &chains)?;
            }
            let best = best_chain(&spec, chains);
            let result = json!({ "solution": best.solution, "objective": best.objective });
            if let Some(out) = &cfg.out {
                write_json_file(out, &json!({ "results": [result], "config": echo(&cfg) }))?;
            }
            println!("{result}");
            Ok(())
        }
        (None, Some(dir)) => {
            let mut data = Dataset::load(dir)?;
            if data.spec() != &spec {
                return Err(Error::Input(format!(
                    "checkpoint was trained for {}, data is {}",
                    spec.name,
                    data.spec().name
                )));
            }
            if let Some(limit) = cfg.limit {
                data = data.head(limit.min(data.len()));
            }
            let mut results = Vec::with_capacity(data.len());
            for (i, row) in data.rows.iter().enumerate() {
                let chains = sample_chains(&model, &row.x, &SampleConfig {
                    seed: sc.seed.wrapping_add(i as u64),
                    ..sc.clone()
                })?;
                if let Some(trace) = &cfg.trace {
                    write_trajectories(indexed(trace, i), &chains)?;
                }
                let best = best_chain(&spec, chains);
                results.push(json!({
                    "index": i,
                    "solution": best.solution,
                    "objective": best.objective,
                    "f_star": row.f_star,
                }));
            }
            let doc = json!({ "results": results, "config": echo(&cfg) });
            match &cfg.out {
                Some(out) => write_json_file(out, &doc)?,
                None => println!("{}", serde_json::to_string_pretty(&doc).expect("serializable")),
            }
            Ok(())
        }
        _ => Err(Error::Input("give exactly one of --input or --data".into())),
    }
}

/// `dir/trace.csv` -> `dir/trace_<i>.csv`.
fn indexed(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
    let ext = path.extension().map_or("csv".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{i}.{ext}"))
}

enum Loaded {
    Gdm(GdmModel),
    Mtfnn(MtfnnModel),
}

fn load_any(path: &Path) -> Result<Loaded> {
    let (json_path, _) = checkpoint_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let meta: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: json_path.display().to_string(),
        msg: e.to_string(),
    })?;
    match meta.get("format").and_then(Value::as_str) {
        Some(GDM_FORMAT) => Ok(Loaded::Gdm(GdmModel::load(path)?)),
        Some(MTFNN_FORMAT) => Ok(Loaded::Mtfnn(MtfnnModel::load(path)?)),
        other => Err(Error::Format {
            path: json_path.display().to_string(),
            msg: format!("unknown checkpoint format {other:?}"),
        }),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalCmdConfig {
    ckpt: Option<PathBuf>,
    data: Option<PathBuf>,
    method: Method,
    report: Option<PathBuf>,
    limit: Option<usize>,
    gd_step: f64,
    gd_iterations: usize,
    gd_restarts: usize,
    gd_penalty: f64,
    omega: f64,
    num_samples: usize,
    normalize_first_k: usize,
    variance_mode: VarianceMode,
    seed: u64,
}

impl Default for EvalCmdConfig {
    fn default() -> Self {
        let s = SampleConfig::default();
        let g = GdConfig::default();
        EvalCmdConfig {
            ckpt: None,
            data: None,
            method: Method::Gdm,
            report: None,
            limit: None,
            gd_step: g.step,
            gd_iterations: g.iterations,
            gd_restarts: g.restarts,
            gd_penalty: g.penalty,
            omega: s.omega,
            num_samples: s.num_samples,
            normalize_first_k: s.normalize_first_k,
            variance_mode: s.variance_mode,
            seed: s.seed,
        }
    }
}

pub fn eval(keys: &Keys, flags: &EvalFlags) -> Result<()> {
    let cfg: EvalCmdConfig = resolve(keys, flags)?;
    let mut data = Dataset::load(require(&cfg.data, "data")?)?;
    if let Some(limit) = cfg.limit {
        data = data.head(limit.min(data.len()));
    }
    let settings = EvalSettings {
        sample: SampleConfig {
            omega: cfg.omega,
            num_samples: cfg.num_samples,
            normalize_first_k: cfg.normalize_first_k,
            variance_mode: cfg.variance_mode,
            seed: cfg.seed,
        },
        gd: GdConfig {
            step: cfg.gd_step,
            iterations: cfg.gd_iterations,
            restarts: cfg.gd_restarts,
            penalty: cfg.gd_penalty,
            seed: cfg.seed,
        },
        oracle: data.manifest.oracle,
    };
    settings.gd.validate()?;
    let loaded = match (&cfg.ckpt, cfg.method) {
        (Some(path), Method::Gdm | Method::Mtfnn) => Some(load_any(path)?),
        (None, Method::Gdm | Method::Mtfnn) => {
            return Err(Error::Input(format!("--method {} needs --ckpt", cfg.method.as_str())))
        }
        _ => None,
    };
    let artifacts = match &loaded {
        Some(Loaded::Gdm(m)) => Artifacts {
            gdm: Some(m),
            mtfnn: None,
        },
        Some(Loaded::Mtfnn(m)) => Artifacts {
            gdm: None,
            mtfnn: Some(m),
        },
        None => Artifacts::default(),
    };
    let mut report = evaluate_model(cfg.method, &data, &artifacts, &settings)?;
    report.config = json!({ "command": "eval", "args": echo(&cfg), "settings": report.config });
    if let Some(path) = &cfg.report {
        report.write_json(path)?;
    }
    println!(
        "{}",
        json!({
            "method": report.method,
            "problem": report.problem,
            "n_instances": report.n_instances,
            "mean": report.mean,
            "median": report.median,
            "min": report.min,
            "max": report.max,
            "wall_clock_s": report.wall_clock_s,
        })
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AblateCmdConfig {
    axis: Option<Axis>,
    values: Vec<f64>,
    data: Option<PathBuf>,
    test: Option<PathBuf>,
    ckpt: Option<PathBuf>,
    out: Option<PathBuf>,
    seeds: Vec<u64>,
    #[serde(rename = "T")]
    steps: usize,
    p_uncond: f64,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    omega: f64,
    normalize_first_k: usize,
    variance_mode: VarianceMode,
}

impl Default for AblateCmdConfig {
    fn default() -> Self {
        let a = AblationConfig::default();
        AblateCmdConfig {
            axis: None,
            values: Vec::new(),
            data: None,
            test: None,
            ckpt: None,
            out: None,
            seeds: a.seeds,
            steps: a.train.steps,
            p_uncond: a.train.p_uncond,
            epochs: a.train.epochs,
            lr: a.train.lr,
            batch_size: a.train.batch_size,
            omega: a.sample.omega,
            normalize_first_k: a.sample.normalize_first_k,
            variance_mode: a.sample.variance_mode,
        }
    }
}

pub fn ablate(keys: &Keys, flags: &AblateFlags) -> Result<()> {
    let cfg: AblateCmdConfig = resolve(keys, flags)?;
    let axis = cfg
        .axis
        .ok_or_else(|| Error::Input("missing required --axis (omega, T, p_uncond or cond_terms)".into()))?;
    let out = require(&cfg.out, "out")?;
    let data = Dataset::load(require(&cfg.data, "data")?)?;
    let (train_set, test) = match &cfg.test {
        Some(p) => (data, Dataset::load(p)?),
        None => {
            let n_test = (data.len() / 10).max(1);
            if data.len() <= n_test {
                return Err(Error::Input("too few rows to hold out a test split; pass --test".into()));
            }
            let cut = data.len() - n_test;
            (data.slice(0, cut), data.slice(cut, data.len()))
        }
    };
    let checkpoint = cfg.ckpt.as_ref().map(GdmModel::load).transpose()?;
    let defaults = AblationConfig::default();
    let ac = AblationConfig {
        train: TrainConfig {
            steps: cfg.steps,
            p_uncond: cfg.p_uncond,
            epochs: cfg.epochs,
            lr: cfg.lr,
            batch_size: cfg.batch_size,
            ..defaults.train
        },
        sample: SampleConfig {
            omega: cfg.omega,
            normalize_first_k: cfg.normalize_first_k,
            variance_mode: cfg.variance_mode,
            ..defaults.sample
        },
        seeds: cfg.seeds.clone(),
    };
    let mut table = run_ablation(axis, &cfg.values, &train_set, &test, &ac, checkpoint.as_ref())?;
    table.config = json!({ "command": "ablate", "args": echo(&cfg), "settings": table.config });
    table.write(&out)?;
    print!("{}", table.to_csv());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TraceCmdConfig {
    ckpt: Option<PathBuf>,
    data: Option<PathBuf>,
    n: usize,
    out: Option<PathBuf>,
    omega: f64,
    num_samples: usize,
    normalize_first_k: usize,
    variance_mode: VarianceMode,
    seed: u64,
}

impl Default for TraceCmdConfig {
    fn default() -> Self {
        let s = SampleConfig::default();
        TraceCmdConfig {
            ckpt: None,
            data: None,
            n: 100,
            out: None,
            omega: s.omega,
            num_samples: s.num_samples,
            normalize_first_k: s.normalize_first_k,
            variance_mode: s.variance_mode,
            seed: s.seed,
        }
    }
}

pub fn trace(keys: &Keys, flags: &TraceFlags) -> Result<()> {
    let cfg: TraceCmdConfig = resolve(keys, flags)?;
    let model = GdmModel::load(require(&cfg.ckpt, "ckpt")?)?;
    let data = Dataset::load(require(&cfg.data, "data")?)?;
    let out = require(&cfg.out, "out")?;
    let spec = model.spec().clone();
    if data.spec() != &spec {
        return Err(Error::Input(format!(
            "checkpoint was trained for {}, data is {}",
            spec.name,
            data.spec().name
        )));
    }
    let sc = SampleConfig {
        omega: cfg.omega,
        num_samples: cfg.num_samples,
        normalize_first_k: cfg.normalize_first_k,
        variance_mode: cfg.variance_mode,
        seed: cfg.seed,
    };
    sc.validate(model.schedule.steps())?;
    let n = cfg.n.min(data.len());
    let mut improved = 0;
    let mut instances = Vec::with_capacity(n);
    for (i, row) in data.rows.iter().take(n).enumerate() {
        let chains = sample_chains(&model, &row.x, &SampleConfig {
            seed: sc.seed.wrapping_add(i as u64),
            ..sc.clone()
        })?;
        write_trajectories(out.join(format!("instance_{i}.csv")), &chains)?;
        let best = best_chain(&spec, chains);
        let first = best.initial_objective();
        if spec.better_sign() * (best.objective - first) > 0.0 {
            improved += 1;
        }
        instances.push(json!({
            "index": i,
            "initial_objective": first,
            "final_objective": best.objective,
            "f_star": row.f_star,
        }));
    }
    let summary = json!({
        "problem": spec.name,
        "n_instances": n,
        "improved": improved,
        "instances": instances,
        "config": { "command": "trace", "args": echo(&cfg) },
    });
    write_json_file(&out.join("summary.json"), &summary)?;
    println!("{}", json!({ "out": out, "n_instances": n, "improved": improved }));
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BoundsCmdConfig {
    trials: usize,
    f_star: f64,
    sigma: f64,
    p: f64,
    p_i: f64,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for BoundsCmdConfig {
    fn default() -> Self {
        let sc = BoundScenario::default();
        BoundsCmdConfig {
            trials: 100_000,
            f_star: sc.f_star,
            sigma: sc.sigma,
            p: sc.p,
            p_i: sc.p_i,
            seed: 0,
            out: None,
        }
    }
}

pub fn bounds(keys: &Keys, flags: &BoundsFlags) -> Result<()> {
    let cfg: BoundsCmdConfig = resolve(keys, flags)?;
    let sc = BoundScenario {
        f_star: cfg.f_star,
        sigma: cfg.sigma,
        p: cfg.p,
        p_i: cfg.p_i,
    };
    let closed = bound_gap(&sc)?;
    // The toy sampler cannot represent every scenario (p_i = 0, p_i >= 1/2);
    // the closed form is still reported.
    let monte_carlo = match monte_carlo_bounds(&sc, cfg.trials, cfg.seed) {
        Ok(r) => serde_json::to_value(r).expect("serializable"),
        Err(Error::Input(msg)) if cfg.trials >= gdmopt::bounds::MIN_TRIALS => json!({ "skipped": msg }),
        Err(e) => return Err(e),
    };
    let doc = json!({
        "closed_form": closed,
        "monte_carlo": monte_carlo,
        "config": { "command": "bounds", "args": echo(&cfg) },
    });
    if let Some(out) = &cfg.out {
        write_json_file(out, &doc)?;
    }
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(())
}
