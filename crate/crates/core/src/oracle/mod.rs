//! Ground-truth solvers: closed-form water-filling for MSR, exhaustive pattern
//! enumeration for CO and a lattice search for NU.

mod dataset;

pub use dataset::{generate_dataset, Dataset, DatasetManifest, SamplePair, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{NuParams, ProblemParams, ProblemSpec, Solution};

/// Lattice resolutions for the NU search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub pos_grid: usize,
    pub pow_grid: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            pos_grid: 50,
            pow_grid: 40,
        }
    }
}

impl OracleConfig {
    /// The next nested lattice: every old position and power point survives,
    /// so the optimum can only improve.
    pub fn refined(self) -> Self {
        OracleConfig {
            pos_grid: 2 * self.pos_grid - 1,
            pow_grid: 2 * self.pow_grid,
        }
    }
}

/// Water level `μ` of the sum-rate maximizer: `p_i = max(μ - 1/g_i, 0)`, `Σ p_i = P`.
///
/// Sorts the floors `1/g_i` and grows the support until the level of the
/// next candidate would sit below its floor.
pub fn water_level(gains: &[f64], budget: f64) -> Result<f64> {
    if gains.is_empty() {
        return Err(Error::input("water-filling needs at least one channel"));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::input(format!("power budget must be positive, got {budget}")));
    }
    if let Some(g) = gains.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::input(format!("channel gains must be positive, got {g}")));
    }
    let mut floors: Vec<f64> = gains.iter().map(|g| 1.0 / g).collect();
    floors.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut level = 0.0;
    for (k, &floor) in floors.iter().enumerate() {
        // Channel k joins only if the current level is above its floor.
        if k > 0 && level <= floor {
            break;
        }
        prefix += floor;
        level = (budget + prefix) / (k + 1) as f64;
    }
    Ok(level)
}

/// Optimal power split for `Σ log2(1 + g_i p_i)` under `Σ p_i ≤ P`.
pub fn waterfilling(gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    let level = water_level(gains, budget)?;
    Ok(gains.iter().map(|g| (level - 1.0 / g).max(0.0)).collect())
}

/// Server shares minimizing `Σ_{i∈S} c_i / (s_i F)` on the simplex:
/// `s_i ∝ √c_i` over the offloaded set, zero elsewhere.
pub fn co_inner_allocation(cycles: &[f64], offloaded: &[bool]) -> Vec<f64> {
    let total: f64 = cycles
        .iter()
        .zip(offloaded)
        .filter(|(_, &o)| o)
        .map(|(c, _)| c.sqrt())
        .sum();
    cycles
        .iter()
        .zip(offloaded)
        .map(|(c, &o)| if o && total > 0.0 { c.sqrt() / total } else { 0.0 })
        .collect()
}

/// Assemble a CO solution vector for a given offload pattern with optimal
/// shares.
pub fn co_solution_for_pattern(spec: &ProblemSpec, x: &[f64], offloaded: &[bool]) -> Solution {
    let ProblemParams::Co(p) = &spec.params else {
        panic!("co_solution_for_pattern on {}", spec.name);
    };
    let n = p.terminals;
    let shares = co_inner_allocation(&x[n..2 * n], offloaded);
    let mut y: Vec<f64> = offloaded.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    y.extend(shares);
    y
}

/// Global CO optimum: every offload pattern with its optimal shares.
pub fn co_exhaustive(spec: &ProblemSpec, x: &[f64]) -> Result<SamplePair> {
    let ProblemParams::Co(p) = &spec.params else {
        return Err(Error::input(format!("co_exhaustive called for {}", spec.name)));
    };
    spec.check_dims(x, None)?;
    let n = p.terminals;
    let mut best: Option<(Solution, f64)> = None;
    for mask in 0..(1u32 << n) {
        let pattern: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        let y = co_solution_for_pattern(spec, x, &pattern);
        let f = spec.evaluate(x, &y);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((y, f));
        }
    }
    let (y_star, f_star) = best.expect("at least one pattern");
    Ok(SamplePair {
        x: x.to_vec(),
        y_star,
        f_star,
    })
}

/// Exhaustive NU search over a `pos_grid × pos_grid` UAV lattice and, per
/// position, the full-budget power simplex at resolution `P / pow_grid`.
///
/// Returns `None` when no lattice point meets every minimum rate.
pub fn nu_gridsearch(
    spec: &ProblemSpec,
    x: &[f64],
    pos_grid: usize,
    pow_grid: usize,
) -> Result<Option<SamplePair>> {
    let ProblemParams::Nu(p) = &spec.params else {
        return Err(Error::input(format!("nu_gridsearch called for {}", spec.name)));
    };
    if pos_grid < 8 || pow_grid < 8 {
        return Err(Error::input(format!(
            "NU grids must be at least 8 (got pos_grid={pos_grid}, pow_grid={pow_grid})"
        )));
    }
    spec.check_dims(x, None)?;
    let lattice = power_lattice(p.users, pow_grid, p.budget_w);
    let tau = p.min_rate.exp2() - 1.0;
    let step = |i: usize| (i as f64 / (pos_grid - 1) as f64) * p.region_m;

    let mut best: Option<(f64, [f64; 2], usize)> = None;
    for ix in 0..pos_grid {
        for iy in 0..pos_grid {
            let q = [step(ix), step(iy)];
            let gains = p.gains(x, q);
            let minimal = p.rate_repair(&gains, &vec![0.0; p.users]);
            if minimal.iter().sum::<f64>() > p.budget_w {
                continue;
            }
            let order = NuParams::sic_order(&gains);
            for (li, powers) in lattice.iter().enumerate() {
                if let Some(rate) = nu_sum_rate_if_feasible(p, &gains, &order, powers, tau) {
                    if best.as_ref().is_none_or(|(bf, _, _)| rate > *bf) {
                        best = Some((rate, q, li));
                    }
                }
            }
        }
    }
    Ok(best.map(|(_, q, li)| {
        let mut y = vec![q[0], q[1]];
        y.extend_from_slice(&lattice[li]);
        // Recompute through the public objective so f_star is bit-consistent.
        let f_star = spec.evaluate(x, &y);
        SamplePair {
            x: x.to_vec(),
            y_star: y,
            f_star,
        }
    }))
}

fn nu_sum_rate_if_feasible(
    p: &NuParams,
    gains: &[f64],
    order: &[usize],
    powers: &[f64],
    tau: f64,
) -> Option<f64> {
    let mut interference = 0.0;
    let mut sinr_product = 1.0;
    for &k in order.iter().rev() {
        let g = gains[k];
        let sinr = g * powers[k] / (g * interference + p.noise_w);
        if sinr < tau {
            return None;
        }
        sinr_product *= 1.0 + sinr;
        interference += powers[k];
    }
    let rates = p.rates(gains, powers);
    debug_assert!((rates.iter().sum::<f64>() - sinr_product.log2()).abs() < 1e-9);
    // Exact check on the rates the objective reports.
    if rates.iter().any(|&r| r < p.min_rate) {
        return None;
    }
    Some(rates.iter().sum())
}

/// All power vectors `(k_1, …, k_n) · P / grid` with `Σ k = grid`.
fn power_lattice(users: usize, grid: usize, budget: f64) -> Vec<Vec<f64>> {
    fn rec(left: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=remaining {
            prefix.push(k);
            rec(left - 1, remaining - k, prefix, out);
            prefix.pop();
        }
    }
    let mut ks = Vec::new();
    rec(users, grid, &mut Vec::new(), &mut ks);
    ks.into_iter()
        .map(|k| k.into_iter().map(|k| (k as f64 / grid as f64) * budget).collect())
        .collect()
}

/// Solve one instance with the family's oracle. `None` only for NU draws
/// whose minimum rates are unattainable.
pub fn solve(spec: &ProblemSpec, x: &[f64], cfg: &OracleConfig) -> Result<Option<SamplePair>> {
    match &spec.params {
        ProblemParams::Msr(p) => {
            let y_star = waterfilling(x, p.budget_w)?;
            let f_star = spec.evaluate(x, &y_star);
            Ok(Some(SamplePair {
                x: x.to_vec(),
                y_star,
                f_star,
            }))
        }
        ProblemParams::Co(_) => co_exhaustive(spec, x).map(Some),
        ProblemParams::Nu(_) => nu_gridsearch(spec, x, cfg.pos_grid, cfg.pow_grid),
    }
}
