//! The named verification checks and their reports.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::config::{boundary_ratio, EnsembleConfig, HardyConfig, BOUNDARY_RATIO};
use super::ensemble::{bridged_path, local_mass, main_path, observe_paths, simulate, streams};
use crate::appell::{
    aligned_steps, dual_simulation_check, norm_identity_check, transform_coefficients, transform_field, AppellParams,
    DualSetup, DualSimulationReport, NormIdentityReport, TransformedProblem,
};
use crate::coefficients::{check_assumption, estimate_bounds, uniform_times, AssumptionReport, CoefficientBounds};
use crate::error::{LabError, Result};
use crate::functionals::{
    convexity_check, energy_check, integrand_positivity, integrated_estimate_check, integrated_precondition,
    interior_finiteness_check, interior_measures, relative_change, ConvexityReport, EnergyReport, FunctionalEvaluator,
    FunctionalSamples, IntegrandPositivity, IntegratedReport, InteriorReport, PathFunctionals, Verdict,
};
use crate::grid::{Field, Grid};
use crate::solver::{SolverConfig, Stepper};
use crate::stats::Estimate;
use crate::stochastic::{sample_path, Clock, SeedLadder};
use crate::thresholds::{
    alpha_gamma, alpha_gamma_lower, alpha_gamma_upper, alpha_root, alpha_root_residual, alpha_root_with, balance_point,
    branch_point, check_mu_window, g_condition_check, hardy_heat_oracle, m_mu, m_mu_any, m_mu_brute_force, noise_bound,
    uniqueness_decay_check, uniqueness_exponent, uniqueness_slope, ThresholdTable, UniquenessReport,
};
use crate::weights::{LogWeight, MollifierParams, TranslatedWeight, WeightDescriptor};

/// Identifiers accepted by `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    Energy,
    Convexity,
    ConvexityTranslated,
    AppellIdentity,
    AppellDual,
    Integrated,
    Interior,
    Thresholds,
    Hardy,
    UniquenessSweep,
}

impl CheckId {
    pub const ALL: [CheckId; 10] = [
        CheckId::Energy,
        CheckId::Convexity,
        CheckId::ConvexityTranslated,
        CheckId::AppellIdentity,
        CheckId::AppellDual,
        CheckId::Integrated,
        CheckId::Interior,
        CheckId::Thresholds,
        CheckId::Hardy,
        CheckId::UniquenessSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CheckId::Energy => "energy",
            CheckId::Convexity => "convexity",
            CheckId::ConvexityTranslated => "convexity-translated",
            CheckId::AppellIdentity => "appell-identity",
            CheckId::AppellDual => "appell-dual",
            CheckId::Integrated => "integrated",
            CheckId::Interior => "interior",
            CheckId::Thresholds => "thresholds",
            CheckId::Hardy => "hardy",
            CheckId::UniquenessSweep => "uniqueness-sweep",
        }
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<CheckId> {
        CheckId::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown check id `{s}`")))
    }
}

/// A calibrated constant re-estimated on a refined discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub label: String,
    pub value: f64,
    pub relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    pub report: EnergyReport,
    /// Minimal `C` under `h`- and `Δt`-halving (only when `MGV > 0`).
    pub refinements: Vec<Refinement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCheck {
    pub gamma: f64,
    pub report: ConvexityReport,
    pub assumption: Option<AssumptionReport>,
    /// Per-path integrand positivity (space-dependent noise only).
    pub positivity: Option<IntegrandPositivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedRun {
    pub shift: f64,
    pub defect_floor: f64,
    pub min_second_diff: f64,
    pub report: ConvexityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatedCheck {
    pub params: AppellParams,
    pub mu: f64,
    pub m_mu: f64,
    pub alpha: f64,
    pub bounds: CoefficientBounds,
    pub runs: Vec<TranslatedRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bookkeeping {
    /// Norm-identity exponent at `t = 0` (expected 0).
    pub exponent_at_start: f64,
    /// Exponent at `t = 1` and its expected value `1/δ² = 4γ²`.
    pub exponent_at_end: f64,
    pub expected_at_end: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub params: AppellParams,
    /// Largest residual of `b(0)=0, b(1)=1, a′=κa², b′=a², a(t)a(1−b(t))=1`.
    pub invariant_residual: f64,
    /// `max |a(t)a(b(t)) − 1|` over the same times (informational).
    pub literal_identity_residual: f64,
    pub aligned_steps: usize,
    pub norm: NormIdentityReport,
    pub bookkeeping: Option<Bookkeeping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedCheck {
    pub gamma: f64,
    pub epsilon: f64,
    pub report: IntegratedReport,
    pub refinements: Vec<Refinement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub table: ThresholdTable,
    pub alpha_gamma_continuity: f64,
    pub m_mu_continuity: f64,
    pub m_mu_brute_force_error: f64,
    pub alpha_root_residual: f64,
    pub alpha_root_above_m: bool,
    pub root_matches_alpha_gamma: f64,
    pub comparison_holds: bool,
    pub noise_bound_at_one: f64,
    pub noise_bound_oracle: f64,
    pub noise_bound_near_half: f64,
    pub g_condition_implication: bool,
    /// `‖G‖²∞` of the configured scenario and whether it is below the
    /// noise bound at `γ` (informational).
    pub scenario_m0_sq: f64,
    pub scenario_below_noise_bound: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyPoint {
    pub beta: f64,
    pub delta: f64,
    pub rule_finite: bool,
    /// `‖·‖²` growth from `L = 4` to `L = 8`.
    pub growth_4_8: f64,
    /// `‖·‖²` growth from `L = 6` to `L = 12`.
    pub growth_6_12: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyCheck {
    pub points: Vec<HardyPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    pub gamma: f64,
    pub params: AppellParams,
    pub alpha: f64,
    pub m0_tilde: f64,
    pub report: UniquenessReport,
    pub predicted_slope: f64,
    pub slope_residual: f64,
    pub strictly_decreasing: bool,
    pub balance_point: f64,
    pub sign_flip: bool,
    /// `log C_R` per shift; the calibrated `C` is the largest.
    pub log_c_per_shift: Vec<f64>,
    pub calibrated_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum CheckDetails {
    Energy(EnergyCheck),
    Convexity(ConvexityCheck),
    ConvexityTranslated(TranslatedCheck),
    AppellIdentity(IdentityCheck),
    AppellDual(DualSimulationReport),
    Integrated(IntegratedCheck),
    Interior(InteriorReport),
    Thresholds(ThresholdCheck),
    Hardy(HardyCheck),
    UniquenessSweep(SweepCheck),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: CheckId,
    pub scenario: String,
    pub verdict: Verdict,
    pub summary: String,
    pub details: CheckDetails,
}

impl CheckReport {
    /// One-line summary `VERDICT check [scenario]: …`.
    pub fn line(&self) -> String {
        format!("{} {} [{}]: {}", self.verdict, self.check, self.scenario, self.summary)
    }

    /// CSV series attached to the report, as `(file name, contents)`.
    pub fn csv_outputs(&self) -> Vec<(String, String)> {
        match &self.details {
            CheckDetails::Convexity(c) => vec![("convexity.csv".into(), c.report.to_csv())],
            CheckDetails::ConvexityTranslated(c) => {
                c.runs.iter().map(|r| (format!("convexity-translated-R{}.csv", r.shift), r.report.to_csv())).collect()
            }
            CheckDetails::UniquenessSweep(s) => vec![("sweep.csv".into(), sweep_csv(&s.report))],
            _ => Vec::new(),
        }
    }
}

/// Columns `R,lhs,lhs_stderr,rhs_exponent,verdict`.
pub fn sweep_csv(report: &UniquenessReport) -> String {
    let mut out = String::from("R,lhs,lhs_stderr,rhs_exponent,verdict\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.shift,
            r.lhs.mean,
            r.lhs.stderr,
            r.rhs_exponent,
            Verdict::from_bool(r.pass)
        ));
    }
    out
}

/// Runs one check on a validated configuration.
pub fn verify(config: &EnsembleConfig, check: CheckId) -> Result<CheckReport> {
    let (verdict, summary, details) = match check {
        CheckId::Energy => energy(config)?,
        CheckId::Convexity => convexity(config)?,
        CheckId::ConvexityTranslated => convexity_translated(config)?,
        CheckId::AppellIdentity => appell_identity(config)?,
        CheckId::AppellDual => appell_dual(config)?,
        CheckId::Integrated => integrated(config)?,
        CheckId::Interior => interior(config)?,
        CheckId::Thresholds => thresholds(config)?,
        CheckId::Hardy => hardy(config)?,
        CheckId::UniquenessSweep => uniqueness_sweep(config)?,
    };
    Ok(CheckReport { check, scenario: config.scenario.clone(), verdict, summary, details })
}

type Outcome = (Verdict, String, CheckDetails);

fn bounds_for(config: &EnsembleConfig, grid: &Grid) -> Result<CoefficientBounds> {
    estimate_bounds(&config.coefficients, grid, &uniform_times(20))
}

/// Samples on the configured discretization plus one `h`-halving and one
/// `Δt`-halving driven by the same (bridge-refined) noise.
fn with_refinements(config: &EnsembleConfig, weight: Arc<dyn LogWeight>) -> Result<[FunctionalSamples; 3]> {
    let grid = config.grid()?;
    let solver = config.solver()?;
    let coefficients = config.coefficients();
    let ladder = SeedLadder::new(config.ensemble.seed);
    let paths = config.ensemble.paths;
    let weights = [weight];
    let run = |grid: Grid, s: SolverConfig, bridged: bool| -> Result<FunctionalSamples> {
        let u0 = config.initial.field(grid)?;
        let coarse = solver.clone();
        let mut out = simulate(grid, coefficients.clone(), s.clone(), &u0, &weights, paths, |i| {
            if bridged {
                bridged_path(&ladder, i, &coarse)
            } else {
                main_path(&ladder, i, &s)
            }
        })?;
        Ok(out.remove(0))
    };
    Ok([
        run(grid, solver.clone(), false)?,
        run(grid.refined(), solver.clone(), false)?,
        run(grid, solver.refined(), true)?,
    ])
}

fn refinement_rows(base: f64, space: f64, time: f64) -> Vec<Refinement> {
    vec![
        Refinement { label: "h/2".into(), value: space, relative_change: relative_change(base, space) },
        Refinement { label: "dt/2".into(), value: time, relative_change: relative_change(base, time) },
    ]
}

fn energy(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let grid = config.grid()?;
    let bounds = bounds_for(config, &grid)?;
    let weight = WeightDescriptor::Quadratic { gamma, time_dependent: true }.build()?;
    let tol = config.tolerances;
    let (report, refinements) = if bounds.mgv > 0.0 {
        let [base, space, time] = with_refinements(config, weight)?;
        let report = energy_check(&base, bounds, tol.energy);
        let c = |s: &FunctionalSamples| energy_check(s, bounds, tol.energy).minimal_c;
        let rows = refinement_rows(report.minimal_c, c(&space), c(&time));
        (report, rows)
    } else {
        let ladder = SeedLadder::new(config.ensemble.seed);
        let solver = config.solver()?;
        let u0 = config.initial_field()?;
        let samples =
            simulate(grid, config.coefficients(), solver.clone(), &u0, &[weight], config.ensemble.paths, |i| {
                main_path(&ladder, i, &solver)
            })?;
        (energy_check(&samples[0], bounds, tol.energy), Vec::new())
    };
    let stable = refinements.iter().all(|r| r.relative_change <= tol.refinement);
    let verdict = Verdict::combine([report.verdict, Verdict::from_bool(stable)]);
    let summary = format!(
        "LHS {:.6e} vs RHS0 {:.6e}, MGV {:.4}, minimal C {:.4}{}",
        report.lhs.mean,
        report.rhs0.mean,
        report.mgv,
        report.minimal_c,
        refinements
            .iter()
            .map(|r| format!(", C({}) {:.4} ({:+.1}%)", r.label, r.value, 100.0 * r.relative_change))
            .collect::<String>()
    );
    Ok((verdict, summary, CheckDetails::Energy(EnergyCheck { report, refinements })))
}

/// Runs the configured decay assumption unless waived; a failure is a
/// configuration error.
fn assumption_gate(config: &EnsembleConfig, grid: &Grid) -> Result<Option<AssumptionReport>> {
    let Some(a) = &config.assumptions else {
        return Ok(None);
    };
    let report = check_assumption(&config.coefficients, a.which, a.gamma, a.epsilon, grid, &uniform_times(20))?;
    if !report.passed() && !a.waive {
        return Err(LabError::Config(format!(
            "noise violates assumption {:?} at (γ, ε) = ({}, {}) by {:.3e}",
            a.which, a.gamma, a.epsilon, report.worst_violation
        )));
    }
    Ok(Some(report))
}

fn convexity(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let grid = config.grid()?;
    let bounds = bounds_for(config, &grid)?;
    if gamma <= bounds.m0 * bounds.m0 / 4.0 {
        return Err(LabError::Config(format!(
            "convexity needs γ > ‖G‖²∞/4: γ = {gamma}, ‖G‖²∞/4 = {:.6}",
            bounds.m0 * bounds.m0 / 4.0
        )));
    }
    let assumption = assumption_gate(config, &grid)?;
    let solver = config.solver()?;
    let ladder = SeedLadder::new(config.ensemble.seed);
    let u0 = config.initial_field()?;
    let weight = WeightDescriptor::Quadratic { gamma, time_dependent: false }.build()?;
    let samples = simulate(grid, config.coefficients(), solver.clone(), &u0, &[weight], config.ensemble.paths, |i| {
        main_path(&ladder, i, &solver)
    })?
    .remove(0);
    let report = convexity_check(&samples, bounds, 0.0, config.tolerances.scale)?;
    let positivity = if config.coefficients.noise.is_space_independent() {
        None
    } else {
        Some(integrand_positivity(&samples, gamma, bounds.m0))
    };
    let positive = positivity.as_ref().map_or(true, |p| p.holds(config.tolerances.positivity));
    let verdict = Verdict::combine([report.verdict, Verdict::from_bool(positive)]);
    let min = report.points.iter().map(|p| p.second_diff).fold(f64::INFINITY, f64::min);
    let failing = report.points.iter().filter(|p| p.verdict != Verdict::Pass).count();
    let summary = format!(
        "{} interior points, min second difference {:.4}, {} not passing (noise-only rule {}), calibrated N {}{}",
        report.points.len(),
        min,
        failing,
        report.noise_only_verdict,
        report.calibrated_n.map_or("unbounded".into(), |n| format!("{n:.4}")),
        positivity
            .as_ref()
            .map_or(String::new(), |_| format!(", integrand positivity {}", Verdict::from_bool(positive)))
    );
    Ok((verdict, summary, CheckDetails::Convexity(ConvexityCheck { gamma, report, assumption, positivity })))
}

fn appell_params(config: &EnsembleConfig, gamma: f64) -> Result<AppellParams> {
    match &config.appell {
        Some(a) => AppellParams::new(a.alpha, a.beta),
        None => AppellParams::for_gamma(gamma),
    }
}

/// `y(0,x) = a(0)^{n/2} u0(a(0)x) e^{a(0)κ|x|²/4}` evaluated analytically.
fn transformed_initial(config: &EnsembleConfig, params: &AppellParams) -> impl Fn(&[f64]) -> f64 {
    let a0 = params.a(0.0);
    let kappa = params.kappa();
    let dim = config.grid.dim;
    let initial = config.initial.clone();
    move |x: &[f64]| {
        let z: Vec<f64> = x.iter().map(|v| a0 * v).collect();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        a0.powf(dim as f64 / 2.0) * initial.eval(&z) * (a0 * kappa * r2 / 4.0).exp()
    }
}

struct Transformed {
    problem: TransformedProblem,
    u0: Field,
    stepper: Stepper,
    ladder: SeedLadder,
}

/// The transformed equation on the identity clock, its initial datum, and
/// the boundary check against `μ|x|²` at `t = 0`.
fn transformed(config: &EnsembleConfig, params: AppellParams, mu: f64) -> Result<Transformed> {
    let grid = config.grid()?;
    let problem = transform_coefficients(config.coefficients(), params, &grid)?;
    let analytic = transformed_initial(config, &params);
    let ratio = boundary_ratio(&grid, |x| mu * x.iter().map(|v| v * v).sum::<f64>(), &analytic);
    if ratio > BOUNDARY_RATIO {
        return Err(LabError::Config(format!(
            "transformed initial datum weighted at level {mu} reaches {ratio:e} of its peak at the boundary"
        )));
    }
    let u0 = transform_field(&config.initial_field()?, &params, 0.0, grid)?.field;
    let stepper = Stepper::new(grid, problem.coefficients.clone(), config.solver()?)?;
    Ok(Transformed { problem, u0, stepper, ladder: SeedLadder::new(config.ensemble.seed).child(streams::TRANSFORMED) })
}

/// Evaluates several weights (and optional per-path extras) on one ensemble
/// of the transformed equation.
fn transformed_samples<E: Send>(
    tr: &Transformed,
    weights: &[Arc<dyn LogWeight>],
    paths: usize,
    extra: impl Fn(usize, &Field) -> E + Sync,
) -> Result<(Vec<FunctionalSamples>, Vec<Vec<E>>)> {
    let grid = *tr.stepper.grid();
    let times = tr.stepper.config().checkpoint_times.clone();
    let evaluators = weights
        .iter()
        .map(|w| FunctionalEvaluator::new(grid, &times, w.as_ref(), tr.problem.coefficients.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let tg = tr.stepper.config().time_grid;
    let rows: Vec<Vec<(Vec<PathFunctionals>, E)>> = observe_paths(
        &tr.stepper,
        &tr.u0,
        paths,
        |i| sample_path(tr.ladder.derive_seed(i as u64), &tg, &Clock::Identity),
        |_, j, f| {
            let funcs = evaluators.iter().map(|e| e.evaluate(j, f)).collect::<Result<Vec<_>>>()?;
            Ok((funcs, extra(j, f)))
        },
    )?;
    let seeds: Vec<u64> = (0..paths).map(|i| tr.ladder.derive_seed(i as u64)).collect();
    let samples = weights
        .iter()
        .enumerate()
        .map(|(k, w)| FunctionalSamples {
            times: times.clone(),
            seeds: seeds.clone(),
            weight: w.descriptor(),
            values: rows.iter().map(|row| row.iter().map(|(f, _)| f[k]).collect()).collect(),
        })
        .collect();
    let extras = rows.into_iter().map(|row| row.into_iter().map(|(_, e)| e).collect()).collect();
    Ok((samples, extras))
}

fn convexity_translated(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let tc = config
        .translated
        .as_ref()
        .ok_or_else(|| LabError::Config("convexity-translated needs a [translated] section".into()))?;
    let mu = tc.mu.unwrap_or(0.9 * gamma);
    let params = appell_params(config, gamma)?;
    let tr = transformed(config, params, mu)?;
    let bounds = tr.problem.bounds;
    let m = m_mu_any(mu)?;
    let alpha = alpha_root_with(mu, m);
    let weights = tc
        .shifts
        .iter()
        .map(|&r| Ok(Arc::new(TranslatedWeight::with_any_level(mu, r)?) as Arc<dyn LogWeight>))
        .collect::<Result<Vec<_>>>()?;
    let (samples, _) = transformed_samples(&tr, &weights, config.ensemble.paths, |_, _| ())?;
    let runs = tc
        .shifts
        .iter()
        .zip(&samples)
        .map(|(&r, s)| {
            let floor = -2.0 * alpha * r * r * bounds.m0 * bounds.m0 - 4.0 * bounds.m1 * bounds.m1;
            let report = convexity_check(s, bounds, floor, config.tolerances.scale)?;
            Ok(TranslatedRun {
                shift: r,
                defect_floor: floor,
                min_second_diff: report.points.iter().map(|p| p.second_diff).fold(f64::INFINITY, f64::min),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = Verdict::combine(runs.iter().map(|r| r.report.verdict));
    let summary = runs
        .iter()
        .map(|r| {
            format!(
                "R = {}: min s {:.4} vs floor {:.4} ({}, noise-only {})",
                r.shift, r.min_second_diff, r.defect_floor, r.report.verdict, r.report.noise_only_verdict
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok((
        verdict,
        format!("μ = {mu:.4}, α = {alpha:.4}; {summary}"),
        CheckDetails::ConvexityTranslated(TranslatedCheck { params, mu, m_mu: m, alpha, bounds, runs }),
    ))
}

/// Uniform draws in `(lo, hi]` from the scan stream.
fn uniform_draws(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
            lo + (hi - lo) * u
        })
        .collect()
}

fn snap_to_knots(times: &[f64], steps: usize) -> Vec<f64> {
    times.iter().map(|&s| (s * steps as f64).round() / steps as f64).collect()
}

fn appell_identity(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let params = appell_params(config, gamma)?;
    let times = config.appell.as_ref().map_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0], |a| a.times.clone());
    let limit = config.appell.as_ref().map_or(100_000, |a| a.step_limit);
    let scan_seed = SeedLadder::new(config.ensemble.seed).child(streams::SCANS).derive_seed(0);
    let mut probe: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    probe.extend(uniform_draws(scan_seed, 100, 0.0, 1.0));
    let invariant_residual = params.invariant_residuals(probe.iter().copied());
    let literal_identity_residual =
        probe.iter().map(|&t| params.literal_identity_residual(t).abs()).fold(0.0, f64::max);

    let grid = config.grid()?;
    let steps = aligned_steps(&params, &times, config.time.steps, limit)?;
    let images: Vec<f64> = times.iter().map(|&t| params.b(t)).collect();
    let solver = SolverConfig::with_checkpoints(steps, snap_to_knots(&images, steps))?
        .theta(config.time.theta)?
        .noise_mode(config.time.noise_mode);
    let stepper = Stepper::new(grid, config.coefficients(), solver)?;
    let ladder = SeedLadder::new(config.ensemble.seed);
    let norm = norm_identity_check(
        &stepper,
        &config.initial_field()?,
        &params,
        gamma,
        &times,
        grid,
        &ladder,
        config.ensemble.paths,
        config.tolerances.identity,
    )?;
    let standard = params.alpha == 1.0 && (params.beta - (1.0 + 4.0 * gamma)).abs() <= 1e-12;
    let bookkeeping = standard.then(|| {
        let start = params.norm_exponent(gamma, 0.0);
        let end = params.norm_exponent(gamma, 1.0);
        let expected = 4.0 * gamma * gamma;
        let rows_pass = norm.rows.iter().filter(|r| r.t == 0.0 || r.t == 1.0).all(|r| r.pass);
        Bookkeeping {
            exponent_at_start: start,
            exponent_at_end: end,
            expected_at_end: expected,
            pass: start.abs() <= 1e-10 && (end - expected).abs() <= 1e-10 && rows_pass,
        }
    });
    let verdict = Verdict::combine([
        Verdict::from_bool(invariant_residual <= 1e-8),
        norm.verdict,
        Verdict::from_bool(bookkeeping.map_or(true, |b| b.pass)),
    ]);
    let worst = norm.rows.iter().map(|r| r.relative_discrepancy).fold(0.0, f64::max);
    let summary = format!(
        "invariants {invariant_residual:.2e}, norm identity worst {:.3}% over {} times, bookkeeping {}, a(t)a(b(t)) residual {literal_identity_residual:.3}",
        100.0 * worst,
        norm.rows.len(),
        bookkeeping.map_or("n/a".into(), |b| Verdict::from_bool(b.pass).to_string()),
    );
    Ok((
        verdict,
        summary,
        CheckDetails::AppellIdentity(IdentityCheck {
            params,
            invariant_residual,
            literal_identity_residual,
            aligned_steps: steps,
            norm,
            bookkeeping,
        }),
    ))
}

fn appell_dual(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let params = appell_params(config, gamma)?;
    let times = config.appell.as_ref().map_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0], |a| a.times.clone());
    let limit = config.appell.as_ref().map_or(100_000, |a| a.step_limit);
    let u0 = config.initial_field()?;
    let ladder = SeedLadder::new(config.ensemble.seed);
    let setup = DualSetup {
        base: config.coefficients(),
        params,
        grid: config.grid()?,
        u0: &u0,
        source_steps: aligned_steps(&params, &times, config.time.steps, limit)?,
        times,
        direct_steps: config.time.steps,
        gamma,
        paths: config.ensemble.paths,
        transform_seeds: ladder,
        direct_seeds: ladder.child(streams::DUAL_DIRECT),
    };
    let report = dual_simulation_check(&setup, config.tolerances.dual_sigma, config.tolerances.dual_floor)?;
    let worst = report.comparisons.iter().filter(|c| c.z_score.is_finite()).map(|c| c.z_score).fold(0.0, f64::max);
    let failing = report.comparisons.iter().filter(|c| !c.pass).count();
    let summary = format!(
        "{} comparisons, largest z {:.2}, {} outside {}σ",
        report.comparisons.len(),
        worst,
        failing,
        report.sigma_limit
    );
    Ok((report.verdict, summary, CheckDetails::AppellDual(report)))
}

fn integrated(config: &EnsembleConfig) -> Result<Outcome> {
    let gamma = config.primary_gamma()?;
    let grid = config.grid()?;
    let bounds = bounds_for(config, &grid)?;
    let epsilon = config.assumptions.as_ref().map_or(0.5, |a| a.epsilon);
    integrated_precondition(&config.coefficients, &grid, gamma, epsilon, bounds)?;
    let weight = WeightDescriptor::Quadratic { gamma, time_dependent: false }.build()?;
    let [base, space, time] = with_refinements(config, weight)?;
    let report = integrated_estimate_check(&base);
    let refinements = refinement_rows(
        report.minimal_n,
        integrated_estimate_check(&space).minimal_n,
        integrated_estimate_check(&time).minimal_n,
    );
    let stable = refinements.iter().all(|r| r.relative_change <= config.tolerances.refinement);
    let verdict = Verdict::combine([report.verdict, Verdict::from_bool(stable)]);
    let summary = format!(
        "integrals ({:.4e}, {:.4e}, {:.4e}), data ({:.4e}, {:.4e}, {:.4e}), minimal N {:.4}{}",
        report.mass,
        report.moment,
        report.gradient,
        report.h0,
        report.h1,
        report.sup_plain,
        report.minimal_n,
        refinements.iter().map(|r| format!(", N({}) {:.4}", r.label, r.value)).collect::<String>()
    );
    Ok((verdict, summary, CheckDetails::Integrated(IntegratedCheck { gamma, epsilon, report, refinements })))
}

fn interior(config: &EnsembleConfig) -> Result<Outcome> {
    let ic = config.interior.as_ref().ok_or_else(|| LabError::Config("interior needs an [interior] section".into()))?;
    let grid = config.grid()?;
    let points = ((grid.points_per_axis() - 1) as f64 * ic.extension).round() as usize + 1;
    let extended = Grid::new(grid.dim(), grid.half_width() * ic.extension, points)?;
    let r_hi = MollifierParams::new(ic.a, ic.gamma)?.r_hi;
    let r_max = (4.0 * r_hi).max(1.01 * extended.max_radius());
    let weight = WeightDescriptor::Mollified { a: ic.a, gamma: ic.gamma, r_max, mesh: ic.mesh }.build()?;
    let solver = config.solver()?;
    let ladder = SeedLadder::new(config.ensemble.seed);
    let run = |g: Grid| -> Result<FunctionalSamples> {
        let u0 = config.initial.field(g)?;
        Ok(simulate(
            g,
            config.coefficients(),
            solver.clone(),
            &u0,
            std::slice::from_ref(&weight),
            config.ensemble.paths,
            |i| main_path(&ladder, i, &solver),
        )?
        .remove(0))
    };
    let base = run(grid)?;
    let ext = run(extended)?;
    let report = interior_finiteness_check(
        interior_measures(&base, ic.epsilon),
        interior_measures(&ext, ic.epsilon),
        Some(interior_measures(&base, 0.0)),
    );
    let summary = format!(
        "sup gradient {:.4e} (growth {:+.2}%), Hessian integral {:.4e} (growth {:+.2}%) on L → {}L",
        report.base.sup_gradient,
        100.0 * report.gradient_growth,
        report.base.hessian_integral,
        100.0 * report.hessian_growth,
        ic.extension
    );
    Ok((report.verdict, summary, CheckDetails::Interior(report)))
}

/// `α₁ = 3/8 + √11/16` and `3/(8·α₁·1·5)`, evaluated independently of the
/// library formulas.
fn noise_bound_oracle_at_one() -> f64 {
    let alpha1 = 3.0 / 8.0 + 11f64.sqrt() / 16.0;
    3.0 / (8.0 * alpha1 * 5.0)
}

fn thresholds(config: &EnsembleConfig) -> Result<Outcome> {
    let tc = config.thresholds.clone().unwrap_or(super::config::ThresholdConfig {
        gamma: 1.0,
        mus: Vec::new(),
        samples: 100,
    });
    let mus = if tc.mus.is_empty() && 0.9 * tc.gamma > 0.5 { vec![0.9 * tc.gamma] } else { tc.mus.clone() };
    let table = ThresholdTable::from_gamma(tc.gamma, &mus)?;
    let bp = branch_point();
    let alpha_gamma_continuity = (alpha_gamma_upper(bp) - alpha_gamma_lower(bp)).abs();
    let m_mu_continuity = (0.25 - (4.0 * bp + 1.0) / (16.0 * bp * bp)).abs();

    let ladder = SeedLadder::new(config.ensemble.seed).child(streams::SCANS);
    let rand_mus = uniform_draws(ladder.derive_seed(1), tc.samples, 0.5, 10.0);
    let rand_gammas = uniform_draws(ladder.derive_seed(2), tc.samples, 0.5, 10.0);
    let mut brute = 0.0f64;
    let mut residual = 0.0f64;
    let mut above = true;
    for &mu in &rand_mus {
        let m = m_mu(mu)?;
        brute = brute.max((m - m_mu_brute_force(mu, 100_000)).abs());
        let a = alpha_root(mu)?;
        residual = residual.max(alpha_root_residual(mu, a, m).abs());
        above &= a > m;
    }
    let mut comparison = true;
    let mut root_match = 0.0f64;
    for &g in &rand_gammas {
        let a = alpha_gamma(g)?;
        comparison &= 4.0 * g > (4.0 * g * g - 1.0) / (8.0 * a * g);
        root_match = root_match.max((alpha_root(g)? - a).abs());
    }
    let a1 = alpha_root(1.0)?;
    let m1 = m_mu(1.0)?;
    let implication = (0..=100).all(|k| {
        let m0 = 3.0 * k as f64 / 100.0;
        let c = g_condition_check(1.0, a1, m1, m0);
        !c.sufficient_pass || c.direct_pass
    });
    let nb1 = noise_bound(1.0)?;
    let oracle = noise_bound_oracle_at_one();
    let near_half = noise_bound(0.5001)?;
    let grid = config.grid()?;
    let m0 = bounds_for(config, &grid)?.m0;
    let scenario_m0_sq = m0 * m0;
    let check = ThresholdCheck {
        scenario_below_noise_bound: scenario_m0_sq < table.noise_bound,
        table,
        alpha_gamma_continuity,
        m_mu_continuity,
        m_mu_brute_force_error: brute,
        alpha_root_residual: residual,
        alpha_root_above_m: above,
        root_matches_alpha_gamma: root_match,
        comparison_holds: comparison,
        noise_bound_at_one: nb1,
        noise_bound_oracle: oracle,
        noise_bound_near_half: near_half,
        g_condition_implication: implication,
        scenario_m0_sq,
    };
    let ok = check.alpha_gamma_continuity <= 1e-12
        && check.m_mu_continuity <= 1e-12
        && check.m_mu_brute_force_error <= 1e-6
        && check.alpha_root_residual <= 1e-12
        && check.alpha_root_above_m
        && check.root_matches_alpha_gamma <= 1e-12
        && check.comparison_holds
        && (nb1 - oracle).abs() <= 1e-12
        && (nb1 - 0.12880).abs() <= 1e-5
        && near_half < 1e-3
        && implication;
    let summary = format!(
        "γ = {}: α_γ {:.6}, noise bound {:.6}; continuity {:.1e}/{:.1e}, m_μ brute force {:.1e}, root residual {:.1e}, noise_bound(1) {:.6}",
        check.table.gamma,
        check.table.alpha_gamma,
        check.table.noise_bound,
        alpha_gamma_continuity,
        m_mu_continuity,
        brute,
        residual,
        nb1
    );
    Ok((Verdict::from_bool(ok), summary, CheckDetails::Thresholds(check)))
}

/// Growth factor treated as divergence between `L` and `2L`.
pub const DIVERGENCE_GROWTH: f64 = 10.0;
/// Relative agreement treated as convergence between `L` and `2L`.
pub const CONVERGENCE_AGREEMENT: f64 = 0.01;

/// Hardy lattice: the closed-form rule against empirical truncation growth.
pub fn hardy_lattice(cfg: &HardyConfig) -> Result<HardyCheck> {
    let mut points = Vec::new();
    for &beta in &cfg.betas {
        for &delta in &cfg.deltas {
            let short = hardy_heat_oracle(beta, delta, 4.0)?;
            let long = hardy_heat_oracle(beta, delta, 6.0)?;
            let rule = short.finite;
            let pass = if rule {
                (long.growth() - 1.0).abs() <= CONVERGENCE_AGREEMENT
            } else {
                short.growth() >= DIVERGENCE_GROWTH
            };
            points.push(HardyPoint {
                beta,
                delta,
                rule_finite: rule,
                growth_4_8: short.growth(),
                growth_6_12: long.growth(),
                pass,
            });
        }
    }
    Ok(HardyCheck { points })
}

fn hardy(config: &EnsembleConfig) -> Result<Outcome> {
    let check = hardy_lattice(&config.hardy.clone().unwrap_or_default())?;
    let finite = check.points.iter().filter(|p| p.rule_finite).count();
    let failing = check.points.iter().filter(|p| !p.pass).count();
    let summary = format!(
        "{} lattice points ({} finite, {} divergent), {} disagreeing with the rule δ² > β² + 4",
        check.points.len(),
        finite,
        check.points.len() - finite,
        failing
    );
    Ok((Verdict::from_bool(failing == 0), summary, CheckDetails::Hardy(check)))
}

fn uniqueness_sweep(config: &EnsembleConfig) -> Result<Outcome> {
    let uc = config
        .uniqueness
        .as_ref()
        .ok_or_else(|| LabError::Config("uniqueness-sweep needs a [uniqueness] section".into()))?;
    let (gamma, eps, mu) = (uc.gamma, uc.epsilon, uc.mu());
    check_mu_window(mu, gamma, eps)?;
    let grid = config.grid()?;
    let base_bounds = bounds_for(config, &grid)?;
    let bound = noise_bound(gamma)?;
    if base_bounds.m0 * base_bounds.m0 >= bound {
        return Err(LabError::Config(format!(
            "‖G‖²∞ = {:.6} must be below the noise bound {bound:.6} at γ = {gamma}",
            base_bounds.m0 * base_bounds.m0
        )));
    }
    let params = AppellParams::for_gamma(gamma)?;
    let tr = transformed(config, params, mu)?;
    let times = &tr.stepper.config().checkpoint_times;
    let half = times
        .iter()
        .position(|&t| (t - 0.5).abs() <= 1e-12)
        .ok_or_else(|| LabError::Config("uniqueness-sweep needs t = 1/2 among the checkpoints".into()))?;
    let shifts = uc.shifts.clone();
    let weights = shifts
        .iter()
        .map(|&r| Ok(Arc::new(TranslatedWeight::new(mu, r)?) as Arc<dyn LogWeight>))
        .collect::<Result<Vec<_>>>()?;
    let (samples, extras) = transformed_samples(&tr, &weights, config.ensemble.paths, |j, f| {
        if j == half {
            shifts.iter().map(|&r| local_mass(f, eps * r / 4.0)).collect()
        } else {
            Vec::new()
        }
    })?;
    let alpha = alpha_root(mu)?;
    let m0t = tr.problem.bounds.m0;
    let g2 = m0t * m0t;
    let mut log_c = Vec::with_capacity(shifts.len());
    for (&r, s) in shifts.iter().zip(&samples) {
        let floor = -2.0 * alpha * r * r * g2 - 4.0 * tr.problem.bounds.m1.powi(2);
        let rep = convexity_check(s, tr.problem.bounds, floor, config.tolerances.scale)?;
        let h0 = rep.series.h[0].mean;
        let h1 = rep.series.h[rep.series.h.len() - 1].mean;
        log_c.push(rep.interpolation_excess - alpha * r * r * g2 / 4.0 + 0.5 * (h0.ln() + h1.ln()));
    }
    let log_cal = log_c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lhs: Vec<Estimate> = (0..shifts.len())
        .map(|k| Estimate::from_samples(&extras.iter().map(|row| row[half][k]).collect::<Vec<_>>()))
        .collect();
    let report =
        uniqueness_decay_check(&shifts, &lhs, mu, gamma, eps, m0t, log_cal.exp(), config.tolerances.uniqueness)?;
    let predicted = uniqueness_slope(alpha, g2, mu, eps);
    let slope_residual = report
        .rows
        .iter()
        .map(|row| (row.rhs_exponent / (row.shift * row.shift) - predicted).abs())
        .fold(0.0, f64::max);
    let mut sorted: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.shift, r.rhs_exponent)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let strictly_decreasing = predicted < 0.0 && sorted.windows(2).all(|w| w[1].1 < w[0].1);
    let balance = balance_point(alpha, mu, eps);
    let sign_flip = uniqueness_exponent(alpha, balance * (1.0 - 1e-3), mu, eps, 1.0) < 0.0
        && uniqueness_exponent(alpha, balance * (1.0 + 1e-3), mu, eps, 1.0) > 0.0;
    let verdict = Verdict::from_bool(report.passed() && slope_residual <= 1e-10 && strictly_decreasing && sign_flip);
    let summary = format!(
        "μ = {mu}, ε = {eps}, M̃0² = {g2:.5} (balance {balance:.5}), slope {predicted:.6}, log C {log_cal:.3}; {}",
        report
            .rows
            .iter()
            .map(|r| format!("R = {}: LHS {:.3e} ≤ {:.3e} {}", r.shift, r.lhs.mean, r.rhs, Verdict::from_bool(r.pass)))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok((
        verdict,
        summary,
        CheckDetails::UniquenessSweep(SweepCheck {
            gamma,
            params,
            alpha,
            m0_tilde: m0t,
            report,
            predicted_slope: predicted,
            slope_residual,
            strictly_decreasing,
            balance_point: balance,
            sign_flip,
            log_c_per_shift: log_c,
            calibrated_c: log_cal.exp(),
        }),
    ))
}
