use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, OracleConfig};
use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::problems::{Instance, ProblemSpec, Solution};

pub const FORMAT_VERSION: &str = "1";
pub const DATA_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Resampling cap for NU instances whose minimum rates cannot be met.
const MAX_REJECTIONS_PER_ROW: usize = 1000;

/// One labelled record `(x, y*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x: Instance,
    pub y_star: Solution,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub problem: ProblemSpec,
    pub n_samples: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub seed: u64,
    pub oracle: OracleConfig,
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_min: Vec<f64>,
    pub y_max: Vec<f64>,
    /// Instances redrawn because the oracle reported no feasible point.
    pub rejections: usize,
    /// Free-form provenance (effective command-line configuration).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl DatasetManifest {
    pub fn normalizer(&self) -> Normalizer {
        Normalizer {
            x_mean: self.x_mean.clone(),
            x_std: self.x_std.clone(),
            y_min: self.y_min.clone(),
            y_max: self.y_max.clone(),
            augment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub rows: Vec<SamplePair>,
}

impl Dataset {
    /// Draw and label `n` instances. Row `i` uses its own ChaCha stream of
    /// `seed`, so the result does not depend on `workers`.
    pub fn generate(
        spec: &ProblemSpec,
        n: usize,
        seed: u64,
        oracle: OracleConfig,
        workers: usize,
    ) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::input("dataset needs at least one sample"));
        }
        let label = |i: usize| -> Result<(SamplePair, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            for rejected in 0..MAX_REJECTIONS_PER_ROW {
                let x = spec.sample_instance(&mut rng);
                if let Some(pair) = solve(spec, &x, &oracle)? {
                    return Ok((pair, rejected));
                }
            }
            Err(Error::input(format!(
                "no feasible {} instance after {MAX_REJECTIONS_PER_ROW} draws",
                spec.name
            )))
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        let labelled: Vec<(SamplePair, usize)> =
            pool.install(|| (0..n).into_par_iter().map(label).collect::<Result<_>>())?;
        let rejections = labelled.iter().map(|(_, r)| r).sum();
        let rows: Vec<SamplePair> = labelled.into_iter().map(|(p, _)| p).collect();
        Ok(Dataset::from_rows(spec.clone(), rows, seed, oracle, rejections))
    }

    pub fn from_rows(
        spec: ProblemSpec,
        rows: Vec<SamplePair>,
        seed: u64,
        oracle: OracleConfig,
        rejections: usize,
    ) -> Dataset {
        let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.x.clone()).collect();
        let ys: Vec<Vec<f64>> = rows.iter().map(|r| r.y_star.clone()).collect();
        let norm = Normalizer::fit(&xs, &ys);
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION.to_string(),
            n_samples: rows.len(),
            x_dim: spec.x_dim,
            y_dim: spec.y_dim,
            problem: spec,
            seed,
            oracle,
            x_mean: norm.x_mean,
            x_std: norm.x_std,
            y_min: norm.y_min,
            y_max: norm.y_max,
            rejections,
            config: serde_json::Value::Null,
        };
        Dataset { manifest, rows }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.manifest.problem
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// First `n` rows, with statistics refitted.
    pub fn head(&self, n: usize) -> Dataset {
        self.slice(0, n)
    }

    /// Rows `start..end` (clamped), with statistics refitted.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.rows.len());
        let rows = self.rows[start.min(end)..end].to_vec();
        let m = &self.manifest;
        Dataset::from_rows(m.problem.clone(), rows, m.seed, m.oracle, m.rejections)
    }

    /// Write `data.csv` and `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let m = &self.manifest;
        let mut csv = String::new();
        let header: Vec<String> = (0..m.x_dim)
            .map(|i| format!("x{i}"))
            .chain((0..m.y_dim).map(|i| format!("y{i}")))
            .chain(std::iter::once("f_star".to_string()))
            .collect();
        csv.push_str(&header.join(","));
        csv.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row.x.iter().chain(&row.y_star).chain(std::iter::once(&row.f_star)) {
                if !first {
                    csv.push(',');
                }
                first = false;
                write!(csv, "{}", fmt_value(*v)).unwrap();
            }
            csv.push('\n');
        }
        let data_path = dir.join(DATA_FILE);
        fs::write(&data_path, csv).map_err(|e| Error::io(&data_path, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(m).expect("manifest serializes");
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        Ok(())
    }

    /// Load from a dataset directory, or from the path of its CSV file.
    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let (data_path, manifest_path) = resolve_paths(path.as_ref());
        let manifest_text =
            fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&manifest_text)
            .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &manifest_path,
                format!("unsupported format version '{}'", manifest.format_version),
            ));
        }
        let text = fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let (dx, dy) = (manifest.x_dim, manifest.y_dim);
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(&data_path, "empty file"))?;
        if header.split(',').count() != dx + dy + 1 {
            return Err(Error::format(&data_path, "header does not match manifest dimensions"));
        }
        let mut rows = Vec::with_capacity(manifest.n_samples);
        for (lineno, line) in lines.enumerate() {
            let values = line
                .split(',')
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::format(&data_path, format!("line {}: {e}", lineno + 2)))?;
            if values.len() != dx + dy + 1 {
                return Err(Error::format(
                    &data_path,
                    format!("line {}: expected {} values", lineno + 2, dx + dy + 1),
                ));
            }
            rows.push(SamplePair {
                x: values[..dx].to_vec(),
                y_star: values[dx..dx + dy].to_vec(),
                f_star: values[dx + dy],
            });
        }
        if rows.len() != manifest.n_samples {
            return Err(Error::format(
                &data_path,
                format!("{} rows, manifest says {}", rows.len(), manifest.n_samples),
            ));
        }
        Ok(Dataset { manifest, rows })
    }
}

/// Shortest representation that parses back to the same bits.
fn fmt_value(v: f64) -> String {
    format!("{v:e}")
}

fn resolve_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.extension().is_some_and(|e| e == "csv") {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join(MANIFEST_FILE))
    } else {
        (path.join(DATA_FILE), path.join(MANIFEST_FILE))
    }
}

/// Generate, label and write a dataset; returns its manifest.
pub fn generate_dataset(
    spec: &ProblemSpec,
    n: usize,
    seed: u64,
    oracle: OracleConfig,
    workers: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    let data = Dataset::generate(spec, n, seed, oracle, workers)?;
    data.save(out_dir)?;
    Ok(data.manifest)
}
