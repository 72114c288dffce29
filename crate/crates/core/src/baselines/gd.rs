use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::co_solution_for_pattern;
use crate::problems::{CoParams, MsrParams, NuParams, ProblemParams, ProblemSpec, Solution};

/// Smallest server share the relaxed CO iterate may take.
const CO_SHARE_FLOOR: f64 = 1e-3;
const FD_STEP: f64 = 1e-6;
const STEP_GROWTH: f64 = 1.25;
/// Upper bound on the adapted step, as a multiple of the initial one.
const MAX_STEP_RATIO: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdConfig {
    /// Initial step in scaled coordinates (adapted by backtracking).
    pub step: f64,
    pub iterations: usize,
    /// Random starts for NU; CO and MSR use a single deterministic start.
    pub restarts: usize,
    /// Weight of the quadratic penalty on relaxed constraints.
    pub penalty: f64,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            step: 1e-2,
            iterations: 500,
            restarts: 20,
            penalty: 10.0,
            seed: 0,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::input(format!("GD step must be positive, got {}", self.step)));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::input("GD needs at least one iteration and one restart"));
        }
        if !(self.penalty >= 0.0) {
            return Err(Error::input("GD penalty weight must be non-negative"));
        }
        Ok(())
    }
}

/// Result of one GD run: the projected solution, its objective and the
/// (scaled, penalized) surrogate value after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GdRun {
    pub solution: Solution,
    pub objective: f64,
    pub history: Vec<f64>,
}

pub fn gd_solve(spec: &ProblemSpec, x: &[f64], cfg: &GdConfig) -> Result<Solution> {
    Ok(gd_solve_traced(spec, x, cfg)?.solution)
}

/// Best run over the configured starts.
pub fn gd_solve_traced(spec: &ProblemSpec, x: &[f64], cfg: &GdConfig) -> Result<GdRun> {
    cfg.validate()?;
    spec.check_dims(x, None)?;
    match &spec.params {
        ProblemParams::Msr(p) => Ok(msr_run(spec, p, x, cfg)),
        ProblemParams::Co(p) => Ok(co_run(spec, p, x, cfg)),
        ProblemParams::Nu(p) => {
            let runs: Vec<GdRun> = (0..cfg.restarts)
                .into_par_iter()
                .map(|r| nu_run(spec, p, x, cfg, r as u64))
                .collect();
            Ok(runs
                .into_iter()
                .reduce(|best, r| if r.objective > best.objective { r } else { best })
                .expect("at least one restart"))
        }
    }
}

/// Monotone projected ascent: a step is accepted only if the surrogate does
/// not decrease; the step halves on rejection and grows after acceptance.
fn projected_ascent(
    mut z: Vec<f64>,
    value: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    project: impl Fn(&mut [f64]),
    cfg: &GdConfig,
) -> (Vec<f64>, Vec<f64>) {
    project(&mut z);
    let mut v = value(&z);
    let mut eta = cfg.step;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    history.push(v);
    for _ in 0..cfg.iterations {
        let g = grad(&z);
        while eta > cfg.step * 1e-12 {
            let mut cand: Vec<f64> = z.iter().zip(&g).map(|(z, g)| z + eta * g).collect();
            project(&mut cand);
            let cv = value(&cand);
            if cv.is_finite() && cv >= v {
                z = cand;
                v = cv;
                eta = (eta * STEP_GROWTH).min(cfg.step * MAX_STEP_RATIO);
                break;
            }
            eta *= 0.5;
        }
        history.push(v);
    }
    (z, history)
}

/// Euclidean projection onto `{z ≥ 0, Σz ≤ cap}`.
pub fn project_capped_simplex(z: &mut [f64], cap: f64) {
    z.iter_mut().for_each(|v| *v = v.max(0.0));
    if z.iter().sum::<f64>() <= cap {
        return;
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = f64::NEG_INFINITY;
    for (k, &u) in sorted.iter().enumerate() {
        acc += u;
        theta = theta.max((acc - cap) / (k + 1) as f64);
    }
    z.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

fn msr_run(spec: &ProblemSpec, p: &MsrParams, gains: &[f64], cfg: &GdConfig) -> GdRun {
    let n = p.channels;
    let budget = p.budget_w;
    let value = |z: &[f64]| {
        gains
            .iter()
            .zip(z)
            .map(|(g, z)| (1.0 + g * z * budget).log2())
            .sum::<f64>()
    };
    let grad = |z: &[f64]| {
        gains
            .iter()
            .zip(z)
            .map(|(g, z)| budget * g / ((1.0 + g * z * budget) * std::f64::consts::LN_2))
            .collect()
    };
    let (z, history) = projected_ascent(
        vec![1.0 / n as f64; n],
        value,
        grad,
        |z| project_capped_simplex(z, 1.0),
        cfg,
    );
    let raw: Vec<f64> = z.iter().map(|v| v * budget).collect();
    finish(spec, gains, &raw, history)
}

fn co_run(spec: &ProblemSpec, p: &CoParams, x: &[f64], cfg: &GdConfig) -> GdRun {
    let n = p.terminals;
    let local: Vec<f64> = (0..n).map(|i| p.local_cost(x, i)).collect();
    let upload: Vec<f64> = (0..n).map(|i| p.upload_cost(x, i)).collect();
    let cycles = &x[n..2 * n];
    let scale: f64 = local.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let mu = cfg.penalty;
    let excess = |z: &[f64]| ((0..n).map(|i| z[i] * z[n + i]).sum::<f64>() - 1.0).max(0.0);
    let value = |z: &[f64]| {
        let mut cost = 0.0;
        for i in 0..n {
            let (a, s) = (z[i], z[n + i]);
            cost += (1.0 - a) * local[i] + a * (upload[i] + cycles[i] / (s * p.server_hz));
        }
        -(cost / scale + mu * excess(z).powi(2))
    };
    let grad = |z: &[f64]| {
        let e = excess(z);
        let mut g = vec![0.0; 2 * n];
        for i in 0..n {
            let (a, s) = (z[i], z[n + i]);
            let server = cycles[i] / (s * p.server_hz);
            g[i] = -((upload[i] + server - local[i]) / scale + 2.0 * mu * e * s);
            g[n + i] = -(-a * server / s / scale + 2.0 * mu * e * a);
        }
        g
    };
    let project = |z: &mut [f64]| {
        for (i, v) in z.iter_mut().enumerate() {
            let lo = if i < n { 0.0 } else { CO_SHARE_FLOOR };
            *v = v.clamp(lo, 1.0);
        }
    };
    let mut start = vec![0.5; n];
    start.extend(vec![1.0 / n as f64; n]);
    let (z, history) = projected_ascent(start, value, grad, project, cfg);
    let offloaded: Vec<bool> = z[..n].iter().map(|&a| a >= 0.5).collect();
    let raw = co_solution_for_pattern(spec, x, &offloaded);
    finish(spec, x, &raw, history)
}

fn nu_run(spec: &ProblemSpec, p: &NuParams, x: &[f64], cfg: &GdConfig, restart: u64) -> GdRun {
    let users = p.users;
    let decode = |z: &[f64]| {
        let mut y = vec![z[0] * p.region_m, z[1] * p.region_m];
        y.extend(z[2..].iter().map(|v| v * p.budget_w));
        y
    };
    let mu = cfg.penalty;
    let value = |z: &[f64]| {
        let y = decode(z);
        let gains = p.gains(x, [y[0], y[1]]);
        let rates = p.rates(&gains, &y[2..]);
        let shortfall: f64 = rates.iter().map(|r| (p.min_rate - r).max(0.0).powi(2)).sum();
        rates.iter().sum::<f64>() - mu * shortfall
    };
    let grad = |z: &[f64]| {
        let mut g = vec![0.0; z.len()];
        let mut probe = z.to_vec();
        for k in 0..z.len() {
            probe[k] = z[k] + FD_STEP;
            let up = value(&probe);
            probe[k] = z[k] - FD_STEP;
            let down = value(&probe);
            probe[k] = z[k];
            g[k] = (up - down) / (2.0 * FD_STEP);
        }
        g
    };
    let project = |z: &mut [f64]| {
        z[0] = z[0].clamp(0.0, 1.0);
        z[1] = z[1].clamp(0.0, 1.0);
        project_capped_simplex(&mut z[2..], 1.0);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart);
    let mut start = vec![rng.random::<f64>(), rng.random::<f64>()];
    start.extend(vec![1.0 / users as f64; users]);
    let (z, history) = projected_ascent(start, value, grad, project, cfg);
    finish(spec, x, &decode(&z), history)
}

fn finish(spec: &ProblemSpec, x: &[f64], raw: &[f64], history: Vec<f64>) -> GdRun {
    let solution = spec.project_feasible(x, raw);
    GdRun {
        objective: spec.evaluate(x, &solution),
        solution,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{solve, waterfilling, OracleConfig};
    use crate::problems::ProblemKind;

    fn instances(kind: ProblemKind, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let spec = ProblemSpec::new(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| spec.sample_instance(&mut rng)).collect()
    }

    #[test]
    fn capped_simplex_projection() {
        let mut z = vec![0.2, -0.1, 0.3];
        project_capped_simplex(&mut z, 1.0);
        assert_eq!(z, vec![0.2, 0.0, 0.3]);
        let mut z = vec![1.0, 1.0, 0.0];
        project_capped_simplex(&mut z, 1.0);
        assert_eq!(z, vec![0.5, 0.5, 0.0]);
        let mut z = vec![2.0, 0.1, 0.0];
        project_capped_simplex(&mut z, 1.0);
        assert_eq!(z, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn msr3_matches_waterfilling() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        for x in instances(ProblemKind::Msr3, 100, 3) {
            let run = gd_solve_traced(&spec, &x, &GdConfig::default()).unwrap();
            let best = spec.evaluate(&x, &waterfilling(&x, 10.0).unwrap());
            assert!((best - run.objective) / best <= 1e-3, "{x:?}: {} vs {best}", run.objective);
            assert!(run.history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn co_output_is_feasible_and_no_better_than_oracle() {
        let spec = ProblemSpec::new(ProblemKind::Co);
        for x in instances(ProblemKind::Co, 30, 4) {
            let y = gd_solve(&spec, &x, &GdConfig::default()).unwrap();
            assert!(spec.is_feasible(&x, &y));
            let best = solve(&spec, &x, &OracleConfig::default()).unwrap().unwrap();
            assert!(spec.evaluate(&x, &y) >= best.f_star * (1.0 - 1e-9));
        }
    }

    #[test]
    fn nu_more_restarts_never_hurt() {
        let spec = ProblemSpec::new(ProblemKind::Nu);
        let cfg = GdConfig {
            iterations: 100,
            ..GdConfig::default()
        };
        let one = GdConfig { restarts: 1, ..cfg.clone() };
        for x in instances(ProblemKind::Nu, 5, 5) {
            let a = gd_solve_traced(&spec, &x, &one).unwrap();
            let b = gd_solve_traced(&spec, &x, &cfg).unwrap();
            assert!(b.objective >= a.objective);
            assert!(spec.is_feasible(&x, &b.solution));
        }
    }

    #[test]
    fn invalid_config() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        let bad = GdConfig {
            step: 0.0,
            ..GdConfig::default()
        };
        assert!(matches!(gd_solve(&spec, &[1.0, 1.0, 1.0], &bad), Err(Error::Input(_))));
    }
}
