//! Potentials `V(t,x)`, noise coefficients `G(t,x)`, their sup-norm metadata
//! and the two decay assumptions on `G`.
//!
//! * A1: `|G(t,x)| ≤ √γ (1+4γ)^{(ε−1)/2} |x|^{−ε}` for `|x| ≥ max{γ,2}/√(1+4γ)`
//!   (the hypothesis on the original problem);
//! * A2: `|G(t,x)| ≤ √γ |x|^{−ε}` for `|x| ≥ max{γ,2}` (the hypothesis of the
//!   convexity estimates).

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::Grid;

/// Multiplicative safety factor applied to every sampled sup norm.
pub const SAFETY_FACTOR: f64 = 1.0 + 1e-6;

/// Step used when a noise gradient is approximated by centered differences.
pub const FD_STEP: f64 = 1e-5;

/// Evaluators for the coefficients of `du = (Δu + Vu)dt + Gu dW`.
pub trait Coefficients: Send + Sync {
    fn potential(&self, t: f64, x: &[f64]) -> f64;
    fn noise(&self, t: f64, x: &[f64]) -> f64;

    /// `∇_x G(t,x)` written into `out` (length `x.len()`); centered
    /// differences unless overridden by an analytic formula.
    fn noise_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        fd_gradient(|y| self.noise(t, y), x, out);
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    /// True when `G` does not depend on `x` (the Doléans-Dade reducible case).
    fn noise_is_space_independent(&self) -> bool {
        false
    }

    /// True when neither `V` nor `G` depends on `t`; lets solvers cache a
    /// single row of coefficient values.
    fn is_time_independent(&self) -> bool {
        false
    }

    fn descriptor(&self) -> CoefficientDescriptor;
}

/// Centered-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut y = [0.0; 2];
    y[..x.len()].copy_from_slice(x);
    for k in 0..x.len() {
        let orig = y[k];
        y[k] = orig + FD_STEP;
        let fp = f(&y[..x.len()]);
        y[k] = orig - FD_STEP;
        let fm = f(&y[..x.len()]);
        y[k] = orig;
        out[k] = (fp - fm) / (2.0 * FD_STEP);
    }
}

fn radius_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Library potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · mean_i cos(frequency · x_i)`; in one dimension `A cos(kx)`.
    Cosine {
        amplitude: f64,
        frequency: f64,
    },
    /// Smooth compact bump `A·exp(1 − 1/(1 − |x|²/ρ²))` inside `|x| < ρ`.
    Bump {
        amplitude: f64,
        radius: f64,
    },
}

impl Potential {
    pub fn eval(&self, _t: f64, x: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Constant { value } => value,
            Potential::Cosine { amplitude, frequency } => {
                amplitude * x.iter().map(|v| (frequency * v).cos()).sum::<f64>() / x.len() as f64
            }
            Potential::Bump { amplitude, radius } => {
                let q = radius_sq(x) / (radius * radius);
                if q >= 1.0 {
                    0.0
                } else {
                    amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
                }
            }
        }
    }
}

/// Library noise coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Noise {
    Zero,
    Constant {
        value: f64,
    },
    /// Space-independent `scale · (1 + slope · t)`.
    TimeLinear {
        scale: f64,
        slope: f64,
    },
    /// `amplitude · (1 + |x|²)^{−exponent/2} · χ(|x|)` where the optional
    /// cutoff `χ` is a quintic step from 1 at `|x| ≤ cutoff` to 0 at
    /// `|x| ≥ cutoff + 1`.
    Decay {
        amplitude: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
}

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` clamped to `[0,1]`, and its derivative.
pub fn smoothstep5(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0)
    } else {
        let s2 = s * s;
        let v = s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
        let d = 30.0 * s2 * (1.0 - s) * (1.0 - s);
        (v, d)
    }
}

impl Noise {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match *self {
            Noise::Zero => 0.0,
            Noise::Constant { value } => value,
            Noise::TimeLinear { scale, slope } => scale * (1.0 + slope * t),
            Noise::Decay { amplitude, exponent, cutoff } => {
                let r2 = radius_sq(x);
                let base = amplitude * (1.0 + r2).powf(-0.5 * exponent);
                match cutoff {
                    None => base,
                    Some(c) => base * (1.0 - smoothstep5(r2.sqrt() - c).0),
                }
            }
        }
    }

    pub fn gradient(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        match *self {
            Noise::Zero | Noise::Constant { .. } | Noise::TimeLinear { .. } => out.fill(0.0),
            Noise::Decay { amplitude, exponent, cutoff } => {
                let r2 = radius_sq(x);
                let base = amplitude * (1.0 + r2).powf(-0.5 * exponent);
                // d/dx_k base = −exponent · x_k · base / (1 + r²)
                let dbase = -exponent * base / (1.0 + r2);
                let r = r2.sqrt();
                let (chi, dchi_dr) = match cutoff {
                    None => (1.0, 0.0),
                    Some(c) => {
                        let (s, ds) = smoothstep5(r - c);
                        (1.0 - s, -ds)
                    }
                };
                for (o, &xk) in out.iter_mut().zip(x) {
                    let radial = if r > 0.0 { xk / r } else { 0.0 };
                    *o = dbase * xk * chi + base * dchi_dr * radial;
                }
            }
        }
    }

    pub fn is_space_independent(&self) -> bool {
        matches!(self, Noise::Zero | Noise::Constant { .. } | Noise::TimeLinear { .. })
    }
}

/// A library coefficient pair `(V, G)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub potential: Potential,
    pub noise: Noise,
}

impl CoefficientSpec {
    pub fn new(potential: Potential, noise: Noise) -> CoefficientSpec {
        CoefficientSpec { potential, noise }
    }

    pub fn zero() -> CoefficientSpec {
        CoefficientSpec::new(Potential::Zero, Noise::Zero)
    }
}

impl Coefficients for CoefficientSpec {
    fn potential(&self, t: f64, x: &[f64]) -> f64 {
        self.potential.eval(t, x)
    }

    fn noise(&self, t: f64, x: &[f64]) -> f64 {
        self.noise.eval(t, x)
    }

    fn noise_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.noise.gradient(t, x, out)
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn noise_is_space_independent(&self) -> bool {
        self.noise.is_space_independent()
    }

    fn is_time_independent(&self) -> bool {
        !matches!(self.noise, Noise::TimeLinear { slope, .. } if slope != 0.0)
    }

    fn descriptor(&self) -> CoefficientDescriptor {
        CoefficientDescriptor::Library(self.clone())
    }
}

/// Serializable description of a coefficient pair, recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum CoefficientDescriptor {
    Library(CoefficientSpec),
    /// Coefficients rescaled by the conformal transform with parameters `(alpha, beta)`.
    Appell {
        alpha: f64,
        beta: f64,
        /// Whether `G` carries the `√b′` factor (identity-clock form).
        scaled_noise: bool,
        base: Box<CoefficientDescriptor>,
    },
    Custom {
        name: String,
    },
}

/// Shared handle to a coefficient implementation.
pub type SharedCoefficients = Arc<dyn Coefficients>;

/// Sup norms of the coefficients over a sampling lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBounds {
    /// `‖V‖∞`
    pub m: f64,
    /// `‖G‖∞`
    pub m0: f64,
    /// `‖∇G‖∞`
    pub m1: f64,
    /// `‖G‖²∞ + 2‖V‖∞`
    pub mgv: f64,
}

impl CoefficientBounds {
    pub fn new(m: f64, m0: f64, m1: f64) -> CoefficientBounds {
        CoefficientBounds { m, m0, m1, mgv: m0 * m0 + 2.0 * m }
    }

    pub const ZERO: CoefficientBounds = CoefficientBounds { m: 0.0, m0: 0.0, m1: 0.0, mgv: 0.0 };
}

/// `n + 1` uniform samples of `[0, 1]`.
pub fn uniform_times(n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Max of `|V|`, `|G|`, `|∇G|` over `time_samples × grid`, times [`SAFETY_FACTOR`].
pub fn estimate_bounds(spec: &dyn Coefficients, grid: &Grid, time_samples: &[f64]) -> Result<CoefficientBounds> {
    let dim = grid.dim();
    let per_time: Vec<Result<[f64; 3]>> = time_samples
        .par_iter()
        .map(|&t| {
            let mut acc = [0.0f64; 3];
            let mut grad = [0.0; 2];
            for (i, p) in grid.nodes() {
                let x = &p[..dim];
                let v = spec.potential(t, x);
                let g = spec.noise(t, x);
                spec.noise_gradient(t, x, &mut grad[..dim]);
                let dg = grad[..dim].iter().map(|d| d * d).sum::<f64>().sqrt();
                if !(v.is_finite() && g.is_finite() && dg.is_finite()) {
                    return Err(LabError::NonFinite(format!("coefficients at t = {t}, node {i}")));
                }
                acc[0] = acc[0].max(v.abs());
                acc[1] = acc[1].max(g.abs());
                acc[2] = acc[2].max(dg);
            }
            Ok(acc)
        })
        .collect();
    let mut acc = [0.0f64; 3];
    for r in per_time {
        let r = r?;
        for k in 0..3 {
            acc[k] = acc[k].max(r[k]);
        }
    }
    Ok(CoefficientBounds::new(acc[0] * SAFETY_FACTOR, acc[1] * SAFETY_FACTOR, acc[2] * SAFETY_FACTOR))
}

/// Which decay hypothesis is being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    A1,
    A2,
}

/// Location of the worst margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Suprema of `|V|` and `|∇G|` outside a radius (the decay-at-infinity trend).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellSup {
    pub radius: f64,
    pub sup_potential: f64,
    pub sup_noise_gradient: f64,
    /// Number of sampled nodes outside the radius.
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption: AssumptionId,
    pub gamma: f64,
    pub epsilon: f64,
    /// `max (|G| − bound)` over the sampled region; `≤ 0` means pass.
    pub worst_violation: f64,
    pub witness: Option<Witness>,
    pub shell_trend: Vec<ShellSup>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.worst_violation <= 0.0
    }
}

/// Region radius and bound prefactor `c` (bound is `c |x|^{−ε}`).
fn assumption_shape(id: AssumptionId, gamma: f64, epsilon: f64) -> (f64, f64) {
    let r_hi = gamma.max(2.0);
    match id {
        AssumptionId::A1 => {
            let s = (1.0 + 4.0 * gamma).sqrt();
            (r_hi / s, gamma.sqrt() * s.powf(epsilon - 1.0))
        }
        AssumptionId::A2 => (r_hi, gamma.sqrt()),
    }
}

/// Decay bound of the assumption at radius `r`.
pub fn assumption_bound(id: AssumptionId, gamma: f64, epsilon: f64, r: f64) -> f64 {
    let (_, c) = assumption_shape(id, gamma, epsilon);
    c * r.powf(-epsilon)
}

pub fn check_assumption_a1(
    spec: &dyn Coefficients,
    gamma: f64,
    epsilon: f64,
    grid: &Grid,
    time_samples: &[f64],
) -> Result<AssumptionReport> {
    check_assumption(spec, AssumptionId::A1, gamma, epsilon, grid, time_samples)
}

pub fn check_assumption_a2(
    spec: &dyn Coefficients,
    gamma: f64,
    epsilon: f64,
    grid: &Grid,
    time_samples: &[f64],
) -> Result<AssumptionReport> {
    check_assumption(spec, AssumptionId::A2, gamma, epsilon, grid, time_samples)
}

pub fn check_assumption(
    spec: &dyn Coefficients,
    id: AssumptionId,
    gamma: f64,
    epsilon: f64,
    grid: &Grid,
    time_samples: &[f64],
) -> Result<AssumptionReport> {
    if !(gamma > 0.0 && epsilon > 0.0) {
        return Err(LabError::InvalidParameter(format!(
            "assumption check needs γ > 0 and ε > 0 (got {gamma}, {epsilon})"
        )));
    }
    let (r_min, c) = assumption_shape(id, gamma, epsilon);
    let dim = grid.dim();
    // Worst margin per time sample as (margin, node); ties keep the smallest node.
    let per_time: Vec<Option<(f64, usize)>> = time_samples
        .par_iter()
        .map(|&t| {
            let mut best: Option<(f64, usize)> = None;
            for i in 0..grid.len() {
                let r = grid.radius(i);
                if r < r_min {
                    continue;
                }
                let p = grid.point(i);
                let margin = spec.noise(t, &p[..dim]).abs() - c * r.powf(-epsilon);
                if best.map_or(true, |(m, _)| margin > m) {
                    best = Some((margin, i));
                }
            }
            best
        })
        .collect();
    let mut worst: Option<(f64, usize, usize)> = None;
    for (ti, b) in per_time.iter().enumerate() {
        if let Some((m, i)) = *b {
            if worst.map_or(true, |(w, _, _)| m > w) {
                worst = Some((m, ti, i));
            }
        }
    }
    let (worst_violation, witness) = match worst {
        Some((m, ti, i)) => (m, Some(Witness { t: time_samples[ti], x: grid.point(i)[..dim].to_vec() })),
        None => (f64::NEG_INFINITY, None),
    };
    Ok(AssumptionReport {
        assumption: id,
        gamma,
        epsilon,
        worst_violation,
        witness,
        shell_trend: shell_trend(spec, grid, time_samples),
    })
}

/// `sup |V|` and `sup |∇G|` outside `L/2`, `3L/4` and `L`.
pub fn shell_trend(spec: &dyn Coefficients, grid: &Grid, time_samples: &[f64]) -> Vec<ShellSup> {
    let l = grid.half_width();
    let dim = grid.dim();
    [0.5 * l, 0.75 * l, l]
        .iter()
        .map(|&radius| {
            let mut sv = 0.0f64;
            let mut sg = 0.0f64;
            let mut nodes = 0;
            let mut grad = [0.0; 2];
            for (i, p) in grid.nodes() {
                if grid.radius(i) <= radius {
                    continue;
                }
                nodes += 1;
                for &t in time_samples {
                    sv = sv.max(spec.potential(t, &p[..dim]).abs());
                    spec.noise_gradient(t, &p[..dim], &mut grad[..dim]);
                    sg = sg.max(grad[..dim].iter().map(|d| d * d).sum::<f64>().sqrt());
                }
            }
            ShellSup { radius, sup_potential: sv, sup_noise_gradient: sg, nodes }
        })
        .collect()
}

/// Max-norm discrepancy between the supplied noise gradient and centered
/// differences of `G` on `samples` random `(t, node)` pairs.
pub fn check_gradient_consistency(spec: &dyn Coefficients, grid: &Grid, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let mut worst = 0.0f64;
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    for _ in 0..samples {
        let i = (rng.next_u64() % grid.len() as u64) as usize;
        let t = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let p = grid.point(i);
        spec.noise_gradient(t, &p[..dim], &mut a[..dim]);
        fd_gradient(|y| spec.noise(t, y), &p[..dim], &mut b[..dim]);
        for k in 0..dim {
            worst = worst.max((a[k] - b[k]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1() -> Grid {
        Grid::new(1, 8.0, 257).unwrap()
    }

    /// `G` exactly equal to an assumption bound (singular at the origin, which
    /// lies outside the region).
    struct AtBound {
        id: AssumptionId,
        gamma: f64,
        epsilon: f64,
        factor: f64,
    }

    impl Coefficients for AtBound {
        fn potential(&self, _t: f64, _x: &[f64]) -> f64 {
            0.0
        }
        fn noise(&self, _t: f64, x: &[f64]) -> f64 {
            let r = radius_sq(x).sqrt().max(1e-3);
            self.factor * assumption_bound(self.id, self.gamma, self.epsilon, r)
        }
        fn descriptor(&self) -> CoefficientDescriptor {
            CoefficientDescriptor::Custom { name: "at-bound".into() }
        }
    }

    #[test]
    fn bounds_of_zero_spec() {
        let b = estimate_bounds(&CoefficientSpec::zero(), &g1(), &uniform_times(4)).unwrap();
        assert_eq!(b, CoefficientBounds::ZERO);
    }

    #[test]
    fn bounds_of_cosine_potential() {
        let spec = CoefficientSpec::new(Potential::Cosine { amplitude: 0.5, frequency: 1.0 }, Noise::Zero);
        let b = estimate_bounds(&spec, &g1(), &uniform_times(4)).unwrap();
        assert!((b.m - 0.5 * SAFETY_FACTOR).abs() < 1e-15);
        assert!((b.mgv - 1.0).abs() < 1e-6 + 1e-12);
        assert_eq!(b.mgv, b.m0 * b.m0 + 2.0 * b.m);
    }

    #[test]
    fn bounds_of_decaying_noise() {
        let c = 0.3;
        let spec = CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: c, exponent: 1.0, cutoff: None });
        let b = estimate_bounds(&spec, &g1(), &uniform_times(2)).unwrap();
        assert!(b.m0 >= c && b.m0 <= c * SAFETY_FACTOR * (1.0 + 1e-15));
    }

    #[test]
    fn bounds_are_monotone() {
        let small = CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: 0.1, exponent: 0.5, cutoff: None });
        let big = CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: 0.2, exponent: 0.5, cutoff: None });
        let ts = uniform_times(3);
        assert!(estimate_bounds(&small, &g1(), &ts).unwrap().m0 <= estimate_bounds(&big, &g1(), &ts).unwrap().m0);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let fine = Grid::new(1, 4.0, 513).unwrap();
        let fine2 = Grid::new(2, 4.0, 129).unwrap();
        let specs = [
            Noise::Decay { amplitude: 0.4, exponent: 0.5, cutoff: None },
            Noise::Decay { amplitude: 0.1, exponent: 1.0, cutoff: Some(2.0) },
            Noise::TimeLinear { scale: 0.2, slope: 1.0 },
        ];
        for n in specs {
            let s = CoefficientSpec::new(Potential::Zero, n);
            assert!(check_gradient_consistency(&s, &fine, 100, 1) < 1e-6);
            assert!(check_gradient_consistency(&s, &fine2, 100, 2) < 1e-6);
        }
    }

    #[test]
    fn a1_with_zero_noise_passes_with_expected_margin() {
        let (gamma, eps) = (1.0, 0.5);
        let g = Grid::new(2, 4.0, 33).unwrap();
        let r = check_assumption_a1(&CoefficientSpec::zero(), gamma, eps, &g, &uniform_times(2)).unwrap();
        let expected = -(gamma.sqrt()) * 5f64.sqrt().powf(eps - 1.0) * g.max_radius().powf(-eps);
        assert!(r.passed());
        assert!((r.worst_violation - expected).abs() < 1e-12, "{} vs {expected}", r.worst_violation);
    }

    #[test]
    fn equality_cases_pass_with_zero_margin() {
        let g = g1();
        let s = AtBound { id: AssumptionId::A1, gamma: 1.0, epsilon: 0.5, factor: 1.0 };
        let r = check_assumption_a1(&s, 1.0, 0.5, &g, &uniform_times(2)).unwrap();
        assert!(r.passed());
        assert_eq!(r.worst_violation, 0.0);
        let s2 = AtBound { id: AssumptionId::A2, gamma: 4.0, epsilon: 0.5, factor: 1.0 };
        let r2 = check_assumption_a2(&s2, 4.0, 0.5, &g, &uniform_times(2)).unwrap();
        assert_eq!(r2.worst_violation, 0.0);
    }

    #[test]
    fn doubled_bound_fails_with_witness_in_region() {
        let g = g1();
        let s = AtBound { id: AssumptionId::A1, gamma: 1.0, epsilon: 0.5, factor: 2.0 };
        let r = check_assumption_a1(&s, 1.0, 0.5, &g, &uniform_times(2)).unwrap();
        assert!(!r.passed());
        let w = r.witness.unwrap();
        assert!(w.x[0].abs() >= 2.0 / 5f64.sqrt());
        // Lexicographic tie-break: earliest time sample.
        assert_eq!(w.t, 0.0);
    }

    #[test]
    fn a1_loosens_as_epsilon_shrinks() {
        let g = Grid::new(1, 8.0, 129).unwrap();
        let s = CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: 0.1, exponent: 0.5, cutoff: None });
        let ts = uniform_times(2);
        for (eps, smaller) in [(0.5, 0.25), (0.9, 0.5)] {
            if check_assumption_a1(&s, 1.0, eps, &g, &ts).unwrap().passed() {
                assert!(check_assumption_a1(&s, 1.0, smaller, &g, &ts).unwrap().passed());
            }
        }
    }

    #[test]
    fn shell_trend_reports_three_shells() {
        let s = CoefficientSpec::new(
            Potential::Cosine { amplitude: 0.5, frequency: 1.0 },
            Noise::Decay { amplitude: 0.1, exponent: 0.5, cutoff: None },
        );
        let r = check_assumption_a2(&s, 0.2, 0.5, &g1(), &uniform_times(1)).unwrap();
        assert_eq!(r.shell_trend.len(), 3);
        assert!(r.shell_trend[0].sup_noise_gradient >= r.shell_trend[1].sup_noise_gradient);
        assert_eq!(r.shell_trend[2].nodes, 0);
    }

    #[test]
    fn descriptors_round_trip_through_toml() {
        let s = CoefficientSpec::new(
            Potential::Cosine { amplitude: 0.5, frequency: 1.0 },
            Noise::Decay { amplitude: 0.1, exponent: 0.5, cutoff: Some(6.0) },
        );
        let text = toml::to_string(&s).unwrap();
        let back: CoefficientSpec = toml::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
