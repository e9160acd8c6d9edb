//! The stochastic Appell (conformal) transformation.
//!
//! For `α, β > 0` let `κ = √(α/β) − √(β/α)`, `a(t) = √(αβ)/(α(1−t)+βt)` and
//! `b(t) = √(β/α)·a(t)·t = βt/(α + (β−α)t)`. Then `a′ = κa²`, `b′ = a²`,
//! `b(0) = 0`, `b(1) = 1` and `a(t)·a(1 − b(t)) = 1`. A solution `u` of
//! `du = (Δu + Vu)dt + Gu dW` is mapped to
//!
//! `y(t,x) = a(t)^{n/2} u(b(t), a(t)x) e^{a(t)κ|x|²/4}`,
//!
//! which solves the same kind of equation with `Ṽ = a²V(b, ax)` and either
//! the noise `G(b, ax)` against `W(b(t))` or, in law, `G̃ = a·G(b, ax)`
//! against a standard Wiener process. Substituting `z = a x` gives
//! `‖e^{γ|x|²}y(t)‖² = ‖e^{(γ/a² + κ/(4a))|z|²}u(b(t))‖²`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{
    estimate_bounds, uniform_times, CoefficientBounds, CoefficientDescriptor, Coefficients, SharedCoefficients,
};
use crate::error::{LabError, Result};
use crate::functionals::{evaluate_paths, FunctionalEvaluator, FunctionalSamples, Verdict};
use crate::grid::{weighted_l2_sq, Field, Grid};
use crate::solver::{SolverConfig, Stepper};
use crate::stats::{variance_estimate, Estimate};
use crate::stochastic::{sample_path, Clock, SeedLadder, TimeChange};
use crate::weights::QuadraticWeight;

/// Tolerance of the parameter invariants verified at construction.
pub const INVARIANT_TOLERANCE: f64 = 1e-8;

/// Interpolation scheme used for the spatial rescale.
pub const INTERPOLATION: &str = "cubic-lagrange";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppellParams {
    pub alpha: f64,
    pub beta: f64,
}

impl AppellParams {
    /// Builds the parameters and verifies `b(0) = 0`, `b(1) = 1`,
    /// `a′ = κa²`, `b′ = a²` (finite differences) and `a(t)a(1−b(t)) = 1`
    /// on a uniform 101-point mesh.
    pub fn new(alpha: f64, beta: f64) -> Result<AppellParams> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(LabError::InvalidParameter(format!("α = {alpha}, β = {beta} must be positive")));
        }
        let p = AppellParams { alpha, beta };
        let worst = p.invariant_residuals((0..=100).map(|k| k as f64 / 100.0));
        if worst > INVARIANT_TOLERANCE {
            return Err(LabError::InvalidParameter(format!("parameter invariants violated by {worst}")));
        }
        Ok(p)
    }

    pub fn identity() -> AppellParams {
        AppellParams { alpha: 1.0, beta: 1.0 }
    }

    /// `(α, β) = (1, 1 + 4γ)`.
    pub fn for_gamma(gamma: f64) -> Result<AppellParams> {
        AppellParams::new(1.0, 1.0 + 4.0 * gamma)
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == self.beta
    }

    pub fn kappa(&self) -> f64 {
        (self.alpha / self.beta).sqrt() - (self.beta / self.alpha).sqrt()
    }

    pub fn a(&self, t: f64) -> f64 {
        (self.alpha * self.beta).sqrt() / (self.alpha * (1.0 - t) + self.beta * t)
    }

    pub fn b(&self, t: f64) -> f64 {
        self.beta * t / (self.alpha + (self.beta - self.alpha) * t)
    }

    pub fn a_prime(&self, t: f64) -> f64 {
        self.kappa() * self.a(t).powi(2)
    }

    pub fn b_prime(&self, t: f64) -> f64 {
        self.a(t).powi(2)
    }

    /// `b⁻¹(s) = αs/(β − (β−α)s)`.
    pub fn b_inverse(&self, s: f64) -> f64 {
        self.alpha * s / (self.beta - (self.beta - self.alpha) * s)
    }

    /// The parameters of the inverse transform, `(β, α)`.
    pub fn inverse(&self) -> AppellParams {
        AppellParams { alpha: self.beta, beta: self.alpha }
    }

    /// `max_t a(t) = max{√(β/α), √(α/β)}`.
    pub fn a_max(&self) -> f64 {
        (self.beta / self.alpha).sqrt().max((self.alpha / self.beta).sqrt())
    }

    /// `a(t)·a(1 − b(t)) − 1`.
    pub fn identity_residual(&self, t: f64) -> f64 {
        self.a(t) * self.a(1.0 - self.b(t)) - 1.0
    }

    /// `a(t)·a(b(t)) − 1`; nonzero in general (reported for comparison).
    pub fn literal_identity_residual(&self, t: f64) -> f64 {
        self.a(t) * self.a(self.b(t)) - 1.0
    }

    /// Largest residual of the invariants over `times`.
    pub fn invariant_residuals(&self, times: impl Iterator<Item = f64>) -> f64 {
        // Richardson-extrapolated centered differences with a step scaled to
        // the curvature of `a`, compared in units of `a²`.
        let h = 1e-3 / (1.0 + self.kappa().abs() * self.a_max());
        let d = |f: &dyn Fn(f64) -> f64, t: f64| {
            let c = t.clamp(h, 1.0 - h);
            let d1 = (f(c + h) - f(c - h)) / (2.0 * h);
            let d2 = (f(c + h / 2.0) - f(c - h / 2.0)) / h;
            (c, (4.0 * d2 - d1) / 3.0)
        };
        let mut worst = self.b(0.0).abs().max((self.b(1.0) - 1.0).abs());
        for t in times {
            let (c, da) = d(&|s| self.a(s), t);
            let (_, db) = d(&|s| self.b(s), t);
            let scale = self.a(c).powi(2);
            worst = worst
                .max((da - self.a_prime(c)).abs() / scale)
                .max((db - self.b_prime(c)).abs() / scale)
                .max(self.identity_residual(t).abs());
        }
        worst
    }

    /// Log-weight coefficient on `u(b(t))` matching `e^{γ|x|²}` on `y(t)`:
    /// `γ/a(t)² + κ/(4a(t))`.
    pub fn norm_exponent(&self, gamma: f64, t: f64) -> f64 {
        let a = self.a(t);
        gamma / (a * a) + self.kappa() / (4.0 * a)
    }

    /// The same exponent written as `γa(1−s)² + κa(1−s)/4` with `s = b(t)`.
    pub fn norm_exponent_at(&self, gamma: f64, s: f64) -> f64 {
        let a = self.a(1.0 - s);
        gamma * a * a + self.kappa() * a / 4.0
    }
}

impl TimeChange for AppellParams {
    fn eval(&self, t: f64) -> f64 {
        self.b(t)
    }

    fn label(&self) -> String {
        format!("appell(alpha={}, beta={})", self.alpha, self.beta)
    }
}

/// Smallest `K ≥ min_steps` for which every `b(t_j)` is a knot of the
/// `K`-step grid (within `1e-12`), searching multiples of the smallest such
/// `K` up to `limit`.
pub fn aligned_steps(params: &AppellParams, times: &[f64], min_steps: usize, limit: usize) -> Result<usize> {
    let images: Vec<f64> = times.iter().map(|&t| params.b(t)).collect();
    let base = (1..=limit)
        .find(|&k| {
            images.iter().all(|&s| {
                let x = s * k as f64;
                (x - x.round()).abs() <= 1e-12 * k as f64
            })
        })
        .ok_or_else(|| LabError::InvalidParameter(format!("no step count up to {limit} aligns the time change")))?;
    Ok(base * min_steps.div_ceil(base).max(1))
}

/// Cubic Lagrange weights for the offset `s ∈ [0,1)` of a point between
/// stencil nodes 1 and 2 of the stencil `{−1, 0, 1, 2}`.
fn cubic_weights(s: f64) -> [f64; 4] {
    [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ]
}

/// Stencil start and weights along one axis, or `None` outside the grid.
fn axis_stencil(g: &Grid, x: f64) -> Option<(usize, [f64; 4])> {
    let l = g.half_width();
    if x.abs() > l * (1.0 + 1e-14) {
        return None;
    }
    let n = g.points_per_axis();
    let pos = ((x + l) / g.spacing()).clamp(0.0, (n - 1) as f64);
    let nearest = pos.round();
    if (pos - nearest).abs() <= 1e-10 {
        // On a node: copy the value.
        let node = nearest as usize;
        let start = node.saturating_sub(1).min(n - 4);
        let mut w = [0.0; 4];
        w[node - start] = 1.0;
        return Some((start, w));
    }
    let cell = (pos.floor() as usize).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    let s = pos - (start + 1) as f64;
    Some((start, cubic_weights(s)))
}

/// Cubic interpolation of `f` at `x`; `None` outside the grid.
pub fn interpolate(f: &Field, x: &[f64]) -> Option<f64> {
    let g = f.grid();
    let v = f.values();
    match g.dim() {
        1 => {
            let (s, w) = axis_stencil(g, x[0])?;
            Some((0..4).map(|k| w[k] * v[s + k]).sum())
        }
        _ => {
            let (sx, wx) = axis_stencil(g, x[0])?;
            let (sy, wy) = axis_stencil(g, x[1])?;
            let mut acc = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    acc += wx[i] * wy[j] * v[g.flat_index(&[sx + i, sy + j])];
                }
            }
            Some(acc)
        }
    }
}

/// Result of rescaling one field.
#[derive(Debug, Clone)]
pub struct TransformedField {
    pub field: Field,
    /// Share of the (proxy) squared mass on nodes whose preimage lies
    /// outside the source grid; those nodes are set to zero.
    pub extrapolated_fraction: f64,
    /// `extrapolated_fraction > 1%`.
    pub degraded: bool,
}

/// `y(t) = a^{n/2} u(b(t), a·x) e^{aκ|x|²/4}` on `target`, with `source`
/// holding `u(b(t))`. Nodes mapped outside the source grid are set to zero;
/// their mass is estimated from the source value one layer inside the
/// nearest edge.
pub fn transform_field(source: &Field, params: &AppellParams, t: f64, target: Grid) -> Result<TransformedField> {
    let sg = *source.grid();
    if sg.dim() != target.dim() {
        return Err(LabError::GridMismatch("source and target dimensions differ".into()));
    }
    let dim = target.dim();
    let a = params.a(t);
    let pref = a.powf(dim as f64 / 2.0);
    let kappa = params.kappa();
    let l = sg.half_width();
    let inner = l - sg.spacing();
    let mut inside_mass = 0.0;
    let mut outside_mass = 0.0;
    let values: Vec<f64> = target
        .nodes()
        .map(|(i, p)| {
            if target.is_boundary(i) {
                return 0.0;
            }
            let x = &p[..dim];
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let gauss = pref * (a * kappa * r2 / 4.0).exp();
            let z: Vec<f64> = x.iter().map(|v| a * v).collect();
            let w = target.quadrature_weight(i);
            match interpolate(source, &z) {
                Some(u) => {
                    let y = gauss * u;
                    inside_mass += y * y * w;
                    y
                }
                None => {
                    let clamped: Vec<f64> = z.iter().map(|v| v.clamp(-inner, inner)).collect();
                    let proxy = gauss * interpolate(source, &clamped).unwrap_or(0.0);
                    outside_mass += proxy * proxy * w;
                    0.0
                }
            }
        })
        .collect();
    let total = inside_mass + outside_mass;
    let extrapolated_fraction = if total > 0.0 { outside_mass / total } else { 0.0 };
    Ok(TransformedField {
        field: Field::new(target, values)?,
        extrapolated_fraction,
        degraded: extrapolated_fraction > 0.01,
    })
}

/// `(Ṽ, G̃)` for a base coefficient pair.
pub struct TransformedCoefficients {
    base: SharedCoefficients,
    params: AppellParams,
    /// `G̃ = a·G(b, ax)` (identity clock) rather than `G(b, ax)` (clock `b`).
    scaled_noise: bool,
}

impl TransformedCoefficients {
    pub fn new(base: SharedCoefficients, params: AppellParams, scaled_noise: bool) -> TransformedCoefficients {
        TransformedCoefficients { base, params, scaled_noise }
    }

    fn scaled(&self, t: f64, x: &[f64]) -> (f64, f64, [f64; 2]) {
        let a = self.params.a(t);
        let mut z = [0.0; 2];
        for (zi, xi) in z.iter_mut().zip(x) {
            *zi = a * xi;
        }
        (a, self.params.b(t), z)
    }
}

impl Coefficients for TransformedCoefficients {
    fn potential(&self, t: f64, x: &[f64]) -> f64 {
        let (a, s, z) = self.scaled(t, x);
        a * a * self.base.potential(s, &z[..x.len()])
    }

    fn noise(&self, t: f64, x: &[f64]) -> f64 {
        let (a, s, z) = self.scaled(t, x);
        let g = self.base.noise(s, &z[..x.len()]);
        if self.scaled_noise {
            a * g
        } else {
            g
        }
    }

    fn noise_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (a, s, z) = self.scaled(t, x);
        self.base.noise_gradient(s, &z[..x.len()], out);
        let factor = if self.scaled_noise { a * a } else { a };
        for o in out.iter_mut() {
            *o *= factor;
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        self.base.has_analytic_gradient()
    }

    fn noise_is_space_independent(&self) -> bool {
        self.base.noise_is_space_independent()
    }

    fn is_time_independent(&self) -> bool {
        self.params.is_identity() && self.base.is_time_independent()
    }

    fn descriptor(&self) -> CoefficientDescriptor {
        CoefficientDescriptor::Appell {
            alpha: self.params.alpha,
            beta: self.params.beta,
            scaled_noise: self.scaled_noise,
            base: Box::new(self.base.descriptor()),
        }
    }
}

/// Transformed coefficients with re-estimated bounds.
pub struct TransformedProblem {
    pub params: AppellParams,
    pub coefficients: SharedCoefficients,
    pub bounds: CoefficientBounds,
    /// Bounds of the base pair over the `a_max`-dilated domain.
    pub base_bounds: CoefficientBounds,
    /// `M̃ ≤ a²_max M`, `M̃0 ≤ a_max M0`, `M̃1 ≤ a²_max M1`.
    pub inequalities_hold: bool,
}

/// Wraps `base` with scaled noise (identity clock) and checks the bound
/// inequalities on `grid`.
pub fn transform_coefficients(
    base: SharedCoefficients,
    params: AppellParams,
    grid: &Grid,
) -> Result<TransformedProblem> {
    let coefficients: SharedCoefficients = Arc::new(TransformedCoefficients::new(base.clone(), params, true));
    let times = uniform_times(40);
    let bounds = estimate_bounds(coefficients.as_ref(), grid, &times)?;
    let amax = params.a_max();
    let wide = Grid::new(grid.dim(), grid.half_width() * amax, grid.points_per_axis())?;
    let base_bounds = estimate_bounds(base.as_ref(), &wide, &times)?;
    let slack = 1.0 + 1e-9;
    let inequalities_hold = bounds.m <= amax * amax * base_bounds.m * slack
        && bounds.m0 <= amax * base_bounds.m0 * slack
        && bounds.m1 <= amax * amax * base_bounds.m1 * slack;
    Ok(TransformedProblem { params, coefficients, bounds, base_bounds, inequalities_hold })
}

/// One time of the norm identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormIdentityRow {
    pub t: f64,
    pub s: f64,
    pub exponent: f64,
    /// `E‖e^{γ|x|²}y(t)‖²` from transformed fields.
    pub lhs: Estimate,
    /// `E‖e^{c|z|²}u(s)‖²` on the source grid.
    pub rhs: Estimate,
    pub relative_discrepancy: f64,
    pub max_extrapolated_fraction: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormIdentityReport {
    pub params: AppellParams,
    pub gamma: f64,
    pub tolerance: f64,
    pub rows: Vec<NormIdentityRow>,
    pub verdict: Verdict,
}

/// Per-path, per-time `(lhs, rhs, extrapolated fraction)`.
type IdentitySamples = Vec<Vec<(f64, f64, f64)>>;

/// Both sides of the norm identity on one ensemble of `u`. The solver's
/// checkpoints must include `b(t)` for every requested `t`.
#[allow(clippy::too_many_arguments)]
pub fn norm_identity_check(
    stepper: &Stepper,
    u0: &Field,
    params: &AppellParams,
    gamma: f64,
    times: &[f64],
    target: Grid,
    ladder: &SeedLadder,
    paths: usize,
    tolerance: f64,
) -> Result<NormIdentityReport> {
    let cfg = stepper.config();
    let marks: Vec<usize> = times
        .iter()
        .map(|&t| {
            let s = params.b(t);
            cfg.checkpoint_times
                .iter()
                .position(|&c| (c - s).abs() <= 1e-12)
                .ok_or_else(|| LabError::InvalidParameter(format!("b({t}) = {s} is not a solver checkpoint")))
        })
        .collect::<Result<_>>()?;
    let samples: IdentitySamples = (0..paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64, f64)>> {
            let path = sample_path(ladder.derive_seed(i as u64), &cfg.time_grid, &Clock::Identity)?;
            let mut row = vec![(0.0, 0.0, 0.0); times.len()];
            stepper.run_observed(u0, &path, |j, _, field| {
                for (k, &m) in marks.iter().enumerate() {
                    if m != j {
                        continue;
                    }
                    let t = times[k];
                    let y = transform_field(field, params, t, target)?;
                    let lhs = weighted_l2_sq(&y.field, |x| gamma * x.iter().map(|v| v * v).sum::<f64>())?;
                    let c = params.norm_exponent(gamma, t);
                    let rhs = weighted_l2_sq(field, |z| c * z.iter().map(|v| v * v).sum::<f64>())?;
                    row[k] = (lhs, rhs, y.extrapolated_fraction);
                }
                Ok(())
            })?;
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<NormIdentityRow> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let lhs = Estimate::from_samples(&samples.iter().map(|r| r[k].0).collect::<Vec<_>>());
            let rhs = Estimate::from_samples(&samples.iter().map(|r| r[k].1).collect::<Vec<_>>());
            let frac = samples.iter().map(|r| r[k].2).fold(0.0, f64::max);
            let rel = (lhs.mean - rhs.mean).abs() / rhs.mean.abs().max(f64::MIN_POSITIVE);
            let rel = if lhs.mean == rhs.mean { 0.0 } else { rel };
            NormIdentityRow {
                t,
                s: params.b(t),
                exponent: params.norm_exponent(gamma, t),
                lhs,
                rhs,
                relative_discrepancy: rel,
                max_extrapolated_fraction: frac,
                pass: rel <= tolerance,
            }
        })
        .collect();
    let verdict = Verdict::from_bool(rows.iter().all(|r| r.pass));
    Ok(NormIdentityReport { params: *params, gamma, tolerance, rows, verdict })
}

/// Distributional comparison at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawComparison {
    pub t: f64,
    pub statistic: LawStatistic,
    pub transformed: Estimate,
    pub direct: Estimate,
    /// `|difference| / combined standard error` (0 when both agree exactly).
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawStatistic {
    MeanNorm,
    VarianceNorm,
    MeanWeighted,
    VarianceWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSimulationReport {
    pub params: AppellParams,
    pub gamma: f64,
    pub paths: usize,
    pub sigma_limit: f64,
    /// Absolute floor on differences (discretization), used when both
    /// routes are deterministic.
    pub absolute_floor: f64,
    pub comparisons: Vec<LawComparison>,
    pub verdict: Verdict,
}

/// Inputs shared by both routes of the dual simulation.
pub struct DualSetup<'a> {
    pub base: SharedCoefficients,
    pub params: AppellParams,
    pub grid: Grid,
    /// `u0` on `grid`.
    pub u0: &'a Field,
    /// Checkpoints `t_j` of the transformed problem (uniform in `t`).
    pub times: Vec<f64>,
    /// Steps of the `u`-solver; `b(t_j)` must be knots.
    pub source_steps: usize,
    /// Steps of the direct `ũ`-solver.
    pub direct_steps: usize,
    pub gamma: f64,
    pub paths: usize,
    pub transform_seeds: SeedLadder,
    pub direct_seeds: SeedLadder,
}

/// Transformed-route and direct-route samples of `‖·‖²` and `‖e^{γ|x|²}·‖²`.
pub struct DualSamples {
    pub transformed: Vec<Vec<(f64, f64)>>,
    pub direct: FunctionalSamples,
}

pub fn dual_samples(setup: &DualSetup<'_>) -> Result<DualSamples> {
    let p = &setup.params;
    let source_times: Vec<f64> = setup.times.iter().map(|&t| p.b(t)).collect();
    let source_cfg = SolverConfig::with_checkpoints(setup.source_steps, snap(&source_times, setup.source_steps)?)?;
    let source = Stepper::new(setup.grid, setup.base.clone(), source_cfg.clone())?;
    let weight_sq = |x: &[f64]| setup.gamma * x.iter().map(|v| v * v).sum::<f64>();
    let transformed: Vec<Vec<(f64, f64)>> = (0..setup.paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64)>> {
            let path =
                sample_path(setup.transform_seeds.derive_seed(i as u64), &source_cfg.time_grid, &Clock::Identity)?;
            let mut row = Vec::with_capacity(setup.times.len());
            source.run_observed(setup.u0, &path, |j, _, field| {
                let y = transform_field(field, p, setup.times[j], setup.grid)?;
                row.push((crate::grid::l2_sq(&y.field), weighted_l2_sq(&y.field, weight_sq)?));
                Ok(())
            })?;
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let direct_coeffs: SharedCoefficients = Arc::new(TransformedCoefficients::new(setup.base.clone(), *p, true));
    let y0 = transform_field(setup.u0, p, 0.0, setup.grid)?.field;
    let direct_cfg = SolverConfig::with_checkpoints(setup.direct_steps, setup.times.clone())?;
    let direct = Stepper::new(setup.grid, direct_coeffs.clone(), direct_cfg.clone())?;
    let weight = QuadraticWeight::new(setup.gamma, false)?;
    let eval = FunctionalEvaluator::new(setup.grid, &setup.times, &weight, direct_coeffs.as_ref())?;
    let direct_samples = evaluate_paths(&direct, &y0, std::slice::from_ref(&eval), setup.paths, |i| {
        sample_path(setup.direct_seeds.derive_seed(i as u64), &direct_cfg.time_grid, &Clock::Identity)
    })?
    .pop()
    .expect("one evaluator");
    Ok(DualSamples { transformed, direct: direct_samples })
}

/// Snaps times to the nearest knots after checking they are knots.
fn snap(times: &[f64], steps: usize) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&s| {
            let k = (s * steps as f64).round();
            if (k - s * steps as f64).abs() > 1e-9 {
                Err(LabError::InvalidParameter(format!("time {s} is not a knot of a {steps}-step grid")))
            } else {
                Ok(k / steps as f64)
            }
        })
        .collect()
}

/// Law-level comparison of the transformed and direct routes: means and
/// variances of `‖·‖²` and `‖e^{γ|x|²}·‖²` at every checkpoint.
pub fn dual_simulation_check(
    setup: &DualSetup<'_>,
    sigma_limit: f64,
    absolute_floor: f64,
) -> Result<DualSimulationReport> {
    let s = dual_samples(setup)?;
    let mut comparisons = Vec::new();
    for (j, &t) in setup.times.iter().enumerate() {
        let a_norm: Vec<f64> = s.transformed.iter().map(|r| r[j].0).collect();
        let a_w: Vec<f64> = s.transformed.iter().map(|r| r[j].1).collect();
        let b_norm = s.direct.column(j, |p| p.plain);
        let b_w = s.direct.column(j, |p| p.h);
        for (stat, x, y) in [
            (LawStatistic::MeanNorm, Estimate::from_samples(&a_norm), Estimate::from_samples(&b_norm)),
            (LawStatistic::VarianceNorm, variance_estimate(&a_norm), variance_estimate(&b_norm)),
            (LawStatistic::MeanWeighted, Estimate::from_samples(&a_w), Estimate::from_samples(&b_w)),
            (LawStatistic::VarianceWeighted, variance_estimate(&a_w), variance_estimate(&b_w)),
        ] {
            let diff = (x.mean - y.mean).abs();
            let se = (x.stderr.powi(2) + y.stderr.powi(2)).sqrt();
            let scale = x.mean.abs().max(y.mean.abs());
            let floor = absolute_floor * scale;
            let z = if diff == 0.0 {
                0.0
            } else if se > 0.0 {
                diff / se
            } else {
                f64::INFINITY
            };
            comparisons.push(LawComparison {
                t,
                statistic: stat,
                transformed: x,
                direct: y,
                z_score: z,
                pass: diff <= sigma_limit * se + floor,
            });
        }
    }
    let verdict = Verdict::from_bool(comparisons.iter().all(|c| c.pass));
    Ok(DualSimulationReport {
        params: setup.params,
        gamma: setup.gamma,
        paths: setup.paths,
        sigma_limit,
        absolute_floor,
        comparisons,
        verdict,
    })
}
