//! The three benchmark problem families.
//!
//! Every family is a parametric program `optimize_{y ∈ Y} f(x, y)`: an
//! [`Instance`] vector `x` is drawn from a family-specific distribution, and a
//! solution vector `y` is scored by [`ProblemSpec::evaluate`]. Layouts:
//!
//! | family | `x` | `y` |
//! |--------|-----|-----|
//! | CO     | `d[0..3]` bits, `c[3..6]` cycles, `h[6..9]` gains, `f_loc[9..12]` Hz | `a[0..3]` offload flags, `s[3..6]` server fractions |
//! | MSR    | per-channel effective gains | per-channel powers (W) |
//! | NU     | ground-user coordinates `(wx, wy)` × 3 (m) | UAV `(qx, qy)` (m), then 3 powers (W) |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility tolerance shared by all families.
pub const FEAS_TOL: f64 = 1e-9;

/// Problem input vector `x`.
pub type Instance = Vec<f64>;
/// Problem decision vector `y`.
pub type Solution = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Co,
    Msr3,
    Msr80,
    Nu,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Co,
        ProblemKind::Msr3,
        ProblemKind::Msr80,
        ProblemKind::Nu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::Co => "co",
            ProblemKind::Msr3 => "msr3",
            ProblemKind::Msr80 => "msr80",
            ProblemKind::Nu => "nu",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "co" => Ok(ProblemKind::Co),
            "msr3" => Ok(ProblemKind::Msr3),
            "msr80" => Ok(ProblemKind::Msr80),
            "nu" => Ok(ProblemKind::Nu),
            other => Err(Error::input(format!("unknown problem '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Single edge server, three terminals; delay + weighted energy cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoParams {
    pub terminals: usize,
    pub server_hz: f64,
    pub bandwidth_hz: f64,
    pub tx_power_w: f64,
    pub noise_w: f64,
    pub energy_weight: f64,
    pub chip_constant: f64,
    pub bits_range: (f64, f64),
    pub cycles_range: (f64, f64),
    pub local_hz_range: (f64, f64),
}

impl Default for CoParams {
    fn default() -> Self {
        CoParams {
            terminals: 3,
            server_hz: 4e9,
            bandwidth_hz: 1e6,
            tx_power_w: 0.5,
            noise_w: 1e-9,
            energy_weight: 0.5,
            chip_constant: 1e-27,
            bits_range: (1e5, 1e6),
            cycles_range: (1e8, 1e9),
            local_hz_range: (0.5e9, 1.5e9),
        }
    }
}

impl CoParams {
    /// Uplink rate `W log2(1 + p_tx h / N0)` in bit/s.
    pub fn uplink_rate(&self, gain: f64) -> f64 {
        self.bandwidth_hz * (1.0 + self.tx_power_w * gain / self.noise_w).log2()
    }

    /// Cost of offloading task `i` excluding the server-execution term:
    /// upload delay plus weighted transmit energy.
    pub fn upload_cost(&self, x: &[f64], i: usize) -> f64 {
        let n = self.terminals;
        let bits = x[i];
        let rate = self.uplink_rate(x[2 * n + i]);
        (1.0 + self.energy_weight * self.tx_power_w) * bits / rate
    }

    /// Cost of running task `i` on the terminal itself.
    pub fn local_cost(&self, x: &[f64], i: usize) -> f64 {
        let n = self.terminals;
        let cycles = x[n + i];
        let f_loc = x[3 * n + i];
        cycles / f_loc + self.energy_weight * self.chip_constant * cycles * f_loc * f_loc
    }

    /// Server-execution delay of task `i` with server share `share`.
    pub fn server_cost(&self, x: &[f64], i: usize, share: f64) -> f64 {
        x[self.terminals + i] / (share * self.server_hz)
    }
}

/// Parallel channels sharing a total power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsrParams {
    pub channels: usize,
    pub budget_w: f64,
    pub gain_floor: f64,
}

/// One UAV serving three ground users with power-domain NOMA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuParams {
    pub users: usize,
    pub region_m: f64,
    pub height_m: f64,
    pub beta0: f64,
    pub noise_w: f64,
    pub budget_w: f64,
    pub min_rate: f64,
}

impl Default for NuParams {
    fn default() -> Self {
        NuParams {
            users: 3,
            region_m: 100.0,
            height_m: 50.0,
            beta0: 1e-3,
            noise_w: 1e-9,
            budget_w: 1.0,
            min_rate: 0.5,
        }
    }
}

impl NuParams {
    /// Channel gains `β0 / (H² + ‖q − w_k‖²)` for UAV position `q`.
    pub fn gains(&self, x: &[f64], q: [f64; 2]) -> Vec<f64> {
        (0..self.users)
            .map(|k| {
                let dx = q[0] - x[2 * k];
                let dy = q[1] - x[2 * k + 1];
                self.beta0 / (self.height_m * self.height_m + dx * dx + dy * dy)
            })
            .collect()
    }

    /// Successive-interference-cancellation order: user indices sorted by
    /// ascending gain, ties broken by index.
    pub fn sic_order(gains: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..gains.len()).collect();
        order.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
        order
    }

    /// Achievable rate of every user (bit/s/Hz), indexed like the input users.
    /// User `k` is interfered by the users decoded after it (stronger gains).
    pub fn rates(&self, gains: &[f64], powers: &[f64]) -> Vec<f64> {
        let order = Self::sic_order(gains);
        let mut rates = vec![0.0; gains.len()];
        let mut interference = 0.0;
        for &k in order.iter().rev() {
            let g = gains[k];
            rates[k] = (1.0 + g * powers[k] / (g * interference + self.noise_w)).log2();
            interference += powers[k];
        }
        rates
    }

    /// Smallest power vector meeting every minimum rate once the powers in
    /// `floor` are respected, built from the strongest user down.
    pub fn rate_repair(&self, gains: &[f64], floor: &[f64]) -> Vec<f64> {
        let tau = self.min_rate.exp2() - 1.0;
        let order = Self::sic_order(gains);
        let mut out = vec![0.0; gains.len()];
        let mut interference = 0.0;
        for &k in order.iter().rev() {
            let need = tau * (interference + self.noise_w / gains[k]);
            out[k] = floor[k].max(need);
            interference += out[k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ProblemParams {
    Co(CoParams),
    Msr(MsrParams),
    Nu(NuParams),
}

/// A problem family: dimensions, objective sense and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: ProblemKind,
    pub x_dim: usize,
    pub y_dim: usize,
    pub sense: Sense,
    pub params: ProblemParams,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Co => Self::co(CoParams::default()),
            ProblemKind::Msr3 => Self::msr(kind, 3, 10.0),
            ProblemKind::Msr80 => Self::msr(kind, 80, 20.0),
            ProblemKind::Nu => Self::nu(NuParams::default()),
        }
    }

    pub fn co(params: CoParams) -> Self {
        let n = params.terminals;
        ProblemSpec {
            name: ProblemKind::Co,
            x_dim: 4 * n,
            y_dim: 2 * n,
            sense: Sense::Minimize,
            params: ProblemParams::Co(params),
        }
    }

    pub fn msr(name: ProblemKind, channels: usize, budget_w: f64) -> Self {
        ProblemSpec {
            name,
            x_dim: channels,
            y_dim: channels,
            sense: Sense::Maximize,
            params: ProblemParams::Msr(MsrParams {
                channels,
                budget_w,
                gain_floor: 0.05,
            }),
        }
    }

    pub fn nu(params: NuParams) -> Self {
        ProblemSpec {
            name: ProblemKind::Nu,
            x_dim: 2 * params.users,
            y_dim: 2 + params.users,
            sense: Sense::Maximize,
            params: ProblemParams::Nu(params),
        }
    }

    pub fn constraint_count(&self) -> usize {
        match &self.params {
            // integrality, fraction box and linking per terminal, plus capacity
            ProblemParams::Co(p) => 3 * p.terminals + 1,
            ProblemParams::Msr(p) => 1 + p.channels,
            ProblemParams::Nu(p) => 2 + 1 + 2 * p.users,
        }
    }

    /// `+1` for maximization, `-1` for minimization: multiply an objective
    /// by this to get a larger-is-better score.
    pub fn better_sign(&self) -> f64 {
        match self.sense {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }

    /// True if objective `a` is at least as good as `b`.
    pub fn at_least_as_good(&self, a: f64, b: f64) -> bool {
        match self.sense {
            Sense::Maximize => a >= b,
            Sense::Minimize => a <= b,
        }
    }

    pub fn check_dims(&self, x: &[f64], y: Option<&[f64]>) -> Result<()> {
        if x.len() != self.x_dim {
            return Err(Error::input(format!(
                "{}: x has length {}, expected {}",
                self.name,
                x.len(),
                self.x_dim
            )));
        }
        if let Some(y) = y {
            if y.len() != self.y_dim {
                return Err(Error::input(format!(
                    "{}: y has length {}, expected {}",
                    self.name,
                    y.len(),
                    self.y_dim
                )));
            }
        }
        Ok(())
    }

    pub fn sample_instance<R: Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        match &self.params {
            ProblemParams::Co(p) => {
                let n = p.terminals;
                let mut x = vec![0.0; 4 * n];
                let bits = Uniform::new(p.bits_range.0, p.bits_range.1).unwrap();
                let cycles = Uniform::new(p.cycles_range.0, p.cycles_range.1).unwrap();
                let local = Uniform::new(p.local_hz_range.0, p.local_hz_range.1).unwrap();
                for i in 0..n {
                    x[i] = bits.sample(rng);
                    x[n + i] = cycles.sample(rng);
                    let h: f64 = Exp1.sample(rng);
                    x[2 * n + i] = h.max(1e-12);
                    x[3 * n + i] = local.sample(rng);
                }
                x
            }
            ProblemParams::Msr(p) => (0..p.channels)
                .map(|_| {
                    let g: f64 = Exp1.sample(rng);
                    g.max(p.gain_floor)
                })
                .collect(),
            ProblemParams::Nu(p) => {
                let coord = Uniform::new_inclusive(0.0, p.region_m).unwrap();
                (0..2 * p.users).map(|_| coord.sample(rng)).collect()
            }
        }
    }

    /// Objective value. For CO an offloaded task with no server share costs
    /// `+inf`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.x_dim);
        debug_assert_eq!(y.len(), self.y_dim);
        match &self.params {
            ProblemParams::Co(p) => {
                let n = p.terminals;
                let mut cost = 0.0;
                for i in 0..n {
                    let (a, s) = (y[i], y[n + i]);
                    if a > 0.0 {
                        if s <= 0.0 {
                            return f64::INFINITY;
                        }
                        cost += a * (p.upload_cost(x, i) + p.server_cost(x, i, s));
                    }
                    if a < 1.0 {
                        cost += (1.0 - a) * p.local_cost(x, i);
                    }
                }
                cost
            }
            ProblemParams::Msr(_) => msr_sum_rate(x, y),
            ProblemParams::Nu(p) => {
                let gains = p.gains(x, [y[0], y[1]]);
                p.rates(&gains, &y[2..]).iter().sum()
            }
        }
    }

    /// One non-negative entry per constraint, `0` when satisfied.
    ///
    /// * CO: `dist(a_i, {0,1})` ×n, fraction box ×n, `s_i ≤ a_i` ×n, `Σ a_i s_i ≤ 1`.
    /// * MSR: budget, then `p_i ≥ 0` per channel.
    /// * NU: `qx`, `qy` box, budget, `p_k ≥ 0` ×3, `R_k ≥ r_min` ×3.
    pub fn constraint_violations(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.constraint_count());
        match &self.params {
            ProblemParams::Co(p) => {
                let n = p.terminals;
                let (a, s) = y.split_at(n);
                out.extend(a.iter().map(|&a| a.abs().min((a - 1.0).abs())));
                out.extend(s.iter().map(|&s| box_violation(s, 0.0, 1.0)));
                out.extend(a.iter().zip(s).map(|(&a, &s)| (s - a).max(0.0)));
                let used: f64 = a.iter().zip(s).map(|(a, s)| a * s).sum();
                out.push((used - 1.0).max(0.0));
            }
            ProblemParams::Msr(p) => {
                out.push((y.iter().sum::<f64>() - p.budget_w).max(0.0));
                out.extend(y.iter().map(|&v| (-v).max(0.0)));
            }
            ProblemParams::Nu(p) => {
                out.push(box_violation(y[0], 0.0, p.region_m));
                out.push(box_violation(y[1], 0.0, p.region_m));
                let powers = &y[2..];
                out.push((powers.iter().sum::<f64>() - p.budget_w).max(0.0));
                out.extend(powers.iter().map(|&v| (-v).max(0.0)));
                let gains = p.gains(x, [y[0], y[1]]);
                out.extend(
                    p.rates(&gains, powers)
                        .iter()
                        .map(|&r| (p.min_rate - r).max(0.0)),
                );
            }
        }
        out
    }

    pub fn total_violation(&self, x: &[f64], y: &[f64]) -> f64 {
        self.constraint_violations(x, y).iter().sum()
    }

    pub fn is_feasible(&self, x: &[f64], y: &[f64]) -> bool {
        self.constraint_violations(x, y)
            .iter()
            .all(|&v| v <= FEAS_TOL)
    }

    /// Repair an unconstrained vector into a feasible solution.
    ///
    /// Box bounds are clipped first. CO indicators are thresholded (`≥ 0.5`
    /// offloads); offloaded tasks whose clipped share is zero fall back to
    /// local execution (all of them sharing uniformly if none has a share);
    /// the remaining shares are rescaled onto the full-capacity simplex.
    /// Powers are rescaled by `P / Σp` when over budget. NU powers are then
    /// raised, strongest user first, until every minimum rate holds, bisecting
    /// toward the minimal allocation if that overshoots the budget.
    pub fn project_feasible(&self, x: &[f64], y_raw: &[f64]) -> Solution {
        debug_assert_eq!(y_raw.len(), self.y_dim);
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        match &self.params {
            ProblemParams::Co(p) => {
                let n = p.terminals;
                let mut a: Vec<f64> = y_raw[..n]
                    .iter()
                    .map(|&v| if finite(v) >= 0.5 { 1.0 } else { 0.0 })
                    .collect();
                let mut s: Vec<f64> = y_raw[n..]
                    .iter()
                    .zip(&a)
                    .map(|(&v, &a)| if a == 1.0 { finite(v).clamp(0.0, 1.0) } else { 0.0 })
                    .collect();
                let offloaded = a.iter().filter(|&&a| a == 1.0).count();
                if offloaded > 0 {
                    let total: f64 = s.iter().sum();
                    if total <= 0.0 {
                        for i in 0..n {
                            if a[i] == 1.0 {
                                s[i] = 1.0 / offloaded as f64;
                            }
                        }
                    } else {
                        for i in 0..n {
                            if a[i] == 1.0 && s[i] <= 0.0 {
                                a[i] = 0.0;
                            }
                        }
                        if (total - 1.0).abs() > 1e-12 {
                            s.iter_mut().for_each(|v| *v /= total);
                        }
                    }
                }
                a.extend(s);
                a
            }
            ProblemParams::Msr(p) => {
                let mut y: Vec<f64> = y_raw.iter().map(|&v| finite(v).max(0.0)).collect();
                rescale_budget(&mut y, p.budget_w);
                y
            }
            ProblemParams::Nu(p) => {
                let q = [
                    finite(y_raw[0]).clamp(0.0, p.region_m),
                    finite(y_raw[1]).clamp(0.0, p.region_m),
                ];
                let mut powers: Vec<f64> = y_raw[2..].iter().map(|&v| finite(v).max(0.0)).collect();
                rescale_budget(&mut powers, p.budget_w);
                let gains = p.gains(x, q);
                let powers = nu_repair_rates(p, &gains, &powers);
                let mut y = vec![q[0], q[1]];
                y.extend(powers);
                y
            }
        }
    }

    /// Budget on the power entries (MSR, NU), if any.
    pub fn power_budget(&self) -> Option<f64> {
        match &self.params {
            ProblemParams::Co(_) => None,
            ProblemParams::Msr(p) => Some(p.budget_w),
            ProblemParams::Nu(p) => Some(p.budget_w),
        }
    }

    /// Number of leading binary entries of `y` (CO offload indicators).
    pub fn binary_dims(&self) -> usize {
        match &self.params {
            ProblemParams::Co(p) => p.terminals,
            _ => 0,
        }
    }
}

/// `Σ log2(1 + g_i p_i)`.
pub fn msr_sum_rate(gains: &[f64], powers: &[f64]) -> f64 {
    gains
        .iter()
        .zip(powers)
        .map(|(g, p)| (1.0 + g * p).log2())
        .sum()
}

fn box_violation(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

fn rescale_budget(powers: &mut [f64], budget: f64) {
    let total: f64 = powers.iter().sum();
    if total > budget {
        let scale = budget / total;
        powers.iter_mut().for_each(|v| *v *= scale);
    }
}

fn nu_repair_rates(p: &NuParams, gains: &[f64], powers: &[f64]) -> Vec<f64> {
    let repaired = p.rate_repair(gains, powers);
    if repaired.iter().sum::<f64>() <= p.budget_w {
        return repaired;
    }
    let zeros = vec![0.0; powers.len()];
    let minimal = p.rate_repair(gains, &zeros);
    if minimal.iter().sum::<f64>() > p.budget_w {
        // Minimum rates unattainable at this position.
        return minimal;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let at = |lambda: f64| {
        let floor: Vec<f64> = powers.iter().map(|v| lambda * v).collect();
        p.rate_repair(gains, &floor)
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid).iter().sum::<f64>() <= p.budget_w {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dims_per_family() {
        let dims: Vec<_> = ProblemKind::ALL
            .iter()
            .map(|&k| {
                let s = ProblemSpec::new(k);
                (s.x_dim, s.y_dim)
            })
            .collect();
        assert_eq!(dims, vec![(12, 6), (3, 3), (80, 80), (6, 5)]);
        assert_eq!(ProblemSpec::new(ProblemKind::Co).sense, Sense::Minimize);
        assert_eq!(ProblemSpec::new(ProblemKind::Nu).sense, Sense::Maximize);
    }

    #[test]
    fn sampling_is_seeded() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        let a = spec.sample_instance(&mut ChaCha8Rng::seed_from_u64(7));
        let b = spec.sample_instance(&mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert!(a.iter().all(|&g| g > 0.0));
    }

    #[test]
    fn nu_coordinates_in_region() {
        let spec = ProblemSpec::new(ProblemKind::Nu);
        let x = spec.sample_instance(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(x.len(), 6);
        assert!(x.iter().all(|&c| (0.0..=100.0).contains(&c)));
    }

    #[test]
    fn msr_objective_values() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        assert_eq!(spec.evaluate(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]), 0.0);
        let two = ProblemSpec::msr(ProblemKind::Msr3, 2, 1.0);
        let f = two.evaluate(&[2.0, 1.0], &[0.75, 0.25]);
        assert!((f - (2.5f64.log2() + 1.25f64.log2())).abs() < 1e-12);
        assert!((f - 1.6439).abs() < 1e-4);
    }

    #[test]
    fn co_all_local_ignores_server() {
        let spec = ProblemSpec::new(ProblemKind::Co);
        let x = spec.sample_instance(&mut ChaCha8Rng::seed_from_u64(3));
        let y = vec![0.0; 6];
        let ProblemParams::Co(p) = &spec.params else { unreachable!() };
        let expect: f64 = (0..3)
            .map(|i| x[3 + i] / x[9 + i] + p.energy_weight * p.chip_constant * x[3 + i] * x[9 + i].powi(2))
            .sum();
        assert!((spec.evaluate(&x, &y) - expect).abs() < 1e-12 * expect);

        let other = ProblemSpec::co(CoParams {
            server_hz: 1e12,
            ..CoParams::default()
        });
        let mut x2 = x.clone();
        x2[6..9].copy_from_slice(&[1e-6, 5.0, 0.01]);
        assert_eq!(spec.evaluate(&x, &y), other.evaluate(&x2, &y));
    }

    #[test]
    fn co_offload_without_share_is_infinite() {
        let spec = ProblemSpec::new(ProblemKind::Co);
        let x = spec.sample_instance(&mut ChaCha8Rng::seed_from_u64(3));
        let y = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(spec.evaluate(&x, &y), f64::INFINITY);
    }

    #[test]
    fn violation_examples() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        let x = [1.0, 1.0, 1.0];
        assert!(spec.constraint_violations(&x, &[3.0, 3.0, 3.0]).iter().all(|&v| v == 0.0));
        assert_eq!(spec.constraint_violations(&x, &[5.0, 5.0, 5.0])[0], 5.0);

        let co = ProblemSpec::new(ProblemKind::Co);
        let xc = co.sample_instance(&mut ChaCha8Rng::seed_from_u64(0));
        let v = co.constraint_violations(&xc, &[1.0, 1.0, 0.0, 0.7, 0.7, 0.0]);
        assert_eq!(v.len(), co.constraint_count());
        assert!((v[9] - 0.4).abs() < 1e-12);
        assert!(v[..9].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn projection_examples() {
        let spec = ProblemSpec::new(ProblemKind::Msr3);
        assert_eq!(spec.project_feasible(&[1.0; 3], &[10.0, 10.0, 0.0]), vec![5.0, 5.0, 0.0]);
        let ok = [2.0, 3.0, 4.0];
        assert_eq!(spec.project_feasible(&[1.0; 3], &ok), ok.to_vec());

        let co = ProblemSpec::new(ProblemKind::Co);
        let x = co.sample_instance(&mut ChaCha8Rng::seed_from_u64(0));
        let y = co.project_feasible(&x, &[0.5, 0.49, 0.0, 0.3, 0.9, 0.0]);
        assert_eq!(&y[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(y[3], 1.0);
        let feasible = [1.0, 1.0, 0.0, 0.25, 0.75, 0.0];
        assert_eq!(co.project_feasible(&x, &feasible), feasible.to_vec());
    }

    #[test]
    fn co_zero_share_falls_back_to_local() {
        let co = ProblemSpec::new(ProblemKind::Co);
        let x = co.sample_instance(&mut ChaCha8Rng::seed_from_u64(0));
        let y = co.project_feasible(&x, &[1.0, 1.0, 1.0, -0.2, 0.3, 0.1]);
        assert_eq!(&y[..3], &[0.0, 1.0, 1.0]);
        assert!((y[4] - 0.75).abs() < 1e-12 && (y[5] - 0.25).abs() < 1e-12);
        let y = co.project_feasible(&x, &[1.0, 1.0, 0.0, -1.0, -1.0, 0.0]);
        assert_eq!(y, vec![1.0, 1.0, 0.0, 0.5, 0.5, 0.0]);
        assert!(co.evaluate(&x, &y).is_finite());
    }

    #[test]
    fn nu_projection_meets_min_rates() {
        let spec = ProblemSpec::new(ProblemKind::Nu);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = spec.sample_instance(&mut rng);
        // All power on one user starves the others.
        let y = spec.project_feasible(&x, &[150.0, -3.0, 5.0, 0.0, 0.0]);
        assert!(spec.is_feasible(&x, &y), "{:?}", spec.constraint_violations(&x, &y));
        assert!(y[2..].iter().sum::<f64>() <= 1.0);
    }
}
