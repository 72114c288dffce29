//! Expected-objective lower bounds for a discriminative predictor and a
//! generative sampler, plus a Monte-Carlo check on a one-dimensional toy.
//!
//! A discriminative predictor whose output exceeds `σ·f*` with probability
//! `p` has `E[f] ≥ p·σ·f* + (1 − p)·f*`. A sampler that lands inside the
//! optimum's neighborhood with probability `p_i` and otherwise behaves like
//! the predictor has `E[f] ≥ p_i·f* + p_o·disc_bound`, `p_o = 1 − p_i`. The two
//! bounds differ by `f*·(σ − 1)·p_i·p`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};

const CHUNK: usize = 10_000;
pub const MIN_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundScenario {
    /// Objective at the optimum, `f* > 0`.
    pub f_star: f64,
    /// Exceedance factor `σ > 1`.
    pub sigma: f64,
    /// Probability that the predictor exceeds `σ·f*`.
    pub p: f64,
    /// Probability that a sample falls inside the neighborhood of `y*`.
    pub p_i: f64,
}

impl Default for BoundScenario {
    fn default() -> Self {
        BoundScenario {
            f_star: 1.0,
            sigma: 1.5,
            p: 0.3,
            p_i: 0.2,
        }
    }
}

impl BoundScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_star > 0.0 && self.f_star.is_finite()) {
            return Err(Error::input(format!("f* must be positive, got {}", self.f_star)));
        }
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return Err(Error::input(format!("sigma must exceed 1, got {}", self.sigma)));
        }
        for (name, v) in [("p", self.p), ("p_i", self.p_i)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::input(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn p_o(&self) -> f64 {
        1.0 - self.p_i
    }

    /// Neighborhood radius of the toy: the predictor's offset `e` with
    /// `f(y* + e) = σ·f*`.
    pub fn radius(&self) -> f64 {
        ((self.sigma - 1.0) * self.f_star).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundGap {
    pub disc_bound: f64,
    pub gen_bound: f64,
    /// `disc_bound − gen_bound`, by subtraction.
    pub gap: f64,
    /// `f*·(σ − 1)·p_i·p`.
    pub gap_closed_form: f64,
}

pub fn disc_bound(f_star: f64, sigma: f64, p: f64) -> f64 {
    p * sigma * f_star + (1.0 - p) * f_star
}

pub fn gen_bound(f_star: f64, sigma: f64, p: f64, p_i: f64) -> f64 {
    p_i * f_star + (1.0 - p_i) * disc_bound(f_star, sigma, p)
}

pub fn bound_gap(sc: &BoundScenario) -> Result<BoundGap> {
    sc.validate()?;
    let d = disc_bound(sc.f_star, sc.sigma, sc.p);
    let g = gen_bound(sc.f_star, sc.sigma, sc.p, sc.p_i);
    Ok(BoundGap {
        disc_bound: d,
        gen_bound: g,
        gap: d - g,
        gap_closed_form: sc.f_star * (sc.sigma - 1.0) * sc.p_i * sc.p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub disc_bound: f64,
    pub gen_bound: f64,
    pub gap: f64,
    pub disc_mean: f64,
    pub gen_mean: f64,
    pub se_disc: f64,
    pub se_gen: f64,
    pub measured_p: f64,
    pub measured_sigma: f64,
    pub measured_p_i: f64,
    pub n_trials: usize,
    /// Offset `e` of the predictor and width of the sampler.
    pub radius: f64,
    pub width: f64,
}

/// Width of a normal sampler centred at `y* + e` whose mass inside
/// `(y* − e, y* + e)` is `p_i`; `p_i` must be below one half.
pub fn sampler_width(radius: f64, p_i: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&p_i) {
        return Err(Error::input(format!(
            "a sampler centred on the predictor's output reaches at most mass 1/2 around y*; p_i = {p_i}"
        )));
    }
    if radius == 0.0 || p_i == 0.0 {
        return Ok(if p_i == 0.0 { f64::INFINITY } else { 0.0 });
    }
    let z = StdNormal::standard().inverse_cdf(0.5 - p_i);
    Ok(-2.0 * radius / z)
}

/// Monte-Carlo estimate on `f(y) = (y − y*)² + f*` with `y* = 0`: the
/// predictor always answers `e`, the sampler draws from `N(e, width²)`.
/// `p` and `σ` are measured as the sampler's frequency of
/// `f ≥ f(e)` and `f(e)/f*`; `p_i` as its frequency of `|y| < e`.
pub fn monte_carlo_toy(f_star: f64, radius: f64, width: f64, n_trials: usize, seed: u64) -> Result<BoundReport> {
    if n_trials < MIN_TRIALS {
        return Err(Error::input(format!("need at least {MIN_TRIALS} trials, got {n_trials}")));
    }
    if !(f_star > 0.0) || !(radius >= 0.0) || !(width >= 0.0 && width.is_finite()) {
        return Err(Error::input("toy needs f* > 0, e >= 0 and a finite width >= 0"));
    }
    let f = |y: f64| y * y + f_star;
    let disc_value = f(radius);
    let chunks: Vec<(f64, f64, usize, usize)> = (0..n_trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_trials - c * CHUNK);
            let normal = Normal::new(radius, width).expect("finite width");
            let (mut sum, mut sq, mut inside, mut exceed) = (0.0, 0.0, 0, 0);
            for _ in 0..len {
                let y = normal.sample(&mut rng);
                let v = f(y);
                sum += v;
                sq += v * v;
                if y.abs() < radius {
                    inside += 1;
                }
                if v >= disc_value {
                    exceed += 1;
                }
            }
            (sum, sq, inside, exceed)
        })
        .collect();
    let n = n_trials as f64;
    let (sum, sq, inside, exceed) = chunks
        .into_iter()
        .fold((0.0, 0.0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2, a.3 + c.3));
    let gen_mean = sum / n;
    let var = (sq / n - gen_mean * gen_mean).max(0.0) * n / (n - 1.0);
    let measured_sigma = disc_value / f_star;
    let measured_p = exceed as f64 / n;
    let measured_p_i = inside as f64 / n;
    let d = disc_bound(f_star, measured_sigma, measured_p);
    let g = gen_bound(f_star, measured_sigma, measured_p, measured_p_i);
    Ok(BoundReport {
        disc_bound: d,
        gen_bound: g,
        gap: d - g,
        disc_mean: disc_value,
        gen_mean,
        se_disc: 0.0,
        se_gen: (var / n).sqrt(),
        measured_p,
        measured_sigma,
        measured_p_i,
        n_trials,
        radius,
        width,
    })
}

/// Toy for a scenario: `e` from `σ`, sampler width from `p_i`.
pub fn monte_carlo_bounds(sc: &BoundScenario, n_trials: usize, seed: u64) -> Result<BoundReport> {
    sc.validate()?;
    let radius = sc.radius();
    let width = sampler_width(radius, sc.p_i)?;
    if !width.is_finite() {
        return Err(Error::input("p_i = 0 leaves the sampler width unbounded"));
    }
    monte_carlo_toy(sc.f_star, radius, width, n_trials, seed)
}
