//! Path ensembles: parallel solving, per-checkpoint statistics and the
//! trajectory cache.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EnsembleConfig;
use crate::coefficients::SharedCoefficients;
use crate::error::{LabError, Result};
use crate::functionals::{evaluate_paths, FunctionalEvaluator, FunctionalSamples, PathFunctionals};
use crate::grid::{Field, Grid};
use crate::solver::{SolverConfig, Stepper, Trajectory};
use crate::stats::{pairwise_sum, Estimate};
use crate::stochastic::{sample_path, Clock, SeedLadder, WienerPath};
use crate::weights::{LogWeight, WeightDescriptor};

/// Child stream labels of the master seed ladder.
pub mod streams {
    /// Brownian-bridge refinements of the main paths.
    pub const BRIDGE: u64 = 1;
    /// Direct simulation of the transformed equation in the dual check.
    pub const DUAL_DIRECT: u64 = 2;
    /// Transformed-equation ensembles with translated weights.
    pub const TRANSFORMED: u64 = 3;
    /// Random parameter draws of the threshold scans.
    pub const SCANS: u64 = 4;
}

/// Main path `i` of a run: seed `ladder.derive_seed(i)` on the identity clock.
pub fn main_path(ladder: &SeedLadder, i: usize, config: &SolverConfig) -> Result<WienerPath> {
    sample_path(ladder.derive_seed(i as u64), &config.time_grid, &Clock::Identity)
}

/// Main path `i` refined once by a Brownian bridge (coupled to [`main_path`]).
pub fn bridged_path(ladder: &SeedLadder, i: usize, coarse: &SolverConfig) -> Result<WienerPath> {
    main_path(ladder, i, coarse)?.refined(ladder.child(streams::BRIDGE).derive_seed(i as u64))
}

/// Builds evaluators for `weights` and runs [`evaluate_paths`].
pub fn simulate(
    grid: Grid,
    coefficients: SharedCoefficients,
    solver: SolverConfig,
    u0: &Field,
    weights: &[Arc<dyn LogWeight>],
    paths: usize,
    path_for: impl Fn(usize) -> Result<WienerPath> + Sync,
) -> Result<Vec<FunctionalSamples>> {
    let evaluators = weights
        .iter()
        .map(|w| FunctionalEvaluator::new(grid, &solver.checkpoint_times, w.as_ref(), coefficients.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let stepper = Stepper::new(grid, coefficients, solver)?;
    evaluate_paths(&stepper, u0, &evaluators, paths, path_for)
}

/// Runs every path and collects `observe(path, checkpoint, field)` in path
/// order; a failing path is reported with its index and seed.
pub fn observe_paths<T: Send>(
    stepper: &Stepper,
    u0: &Field,
    paths: usize,
    path_for: impl Fn(usize) -> Result<WienerPath> + Sync,
    observe: impl Fn(usize, usize, &Field) -> Result<T> + Sync,
) -> Result<Vec<Vec<T>>> {
    (0..paths)
        .into_par_iter()
        .map(|i| {
            let path = path_for(i)?;
            let seed = path.seed();
            let mut row = Vec::with_capacity(stepper.config().checkpoint_times.len());
            stepper
                .run_observed(u0, &path, |j, _, f| {
                    row.push(observe(i, j, f)?);
                    Ok(())
                })
                .map_err(|source| LabError::PathFailed { index: i, seed, source: Box::new(source) })?;
            Ok(row)
        })
        .collect()
}

/// `∫_{|x| ≤ radius} u² dx` with the grid's quadrature weights.
pub fn local_mass(u: &Field, radius: f64) -> f64 {
    let g = u.grid();
    let terms: Vec<f64> = g
        .nodes()
        .filter(|(i, _)| g.radius(*i) <= radius)
        .map(|(i, _)| g.quadrature_weight(i) * u.values()[i].powi(2))
        .collect();
    pairwise_sum(&terms)
}

/// `(mean, stderr, min, max)` of one functional at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub name: String,
    pub rows: Vec<StatRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub weight: WeightDescriptor,
    pub functionals: Vec<FunctionalStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub scenario: String,
    pub paths: usize,
    pub times: Vec<f64>,
    pub weights: Vec<WeightStats>,
}

type Extractor = fn(&PathFunctionals) -> f64;

/// Registered functionals in output order.
pub const FUNCTIONALS: [(&str, Extractor); 11] = [
    ("H", |p| p.h),
    ("HG", |p| p.hg),
    ("VF", |p| p.vf),
    ("D", |p| p.d),
    ("DG", |p| p.dg),
    ("DG_lower", |p| p.dg_lower),
    ("grad_f", |p| p.grad_f),
    ("moment", |p| p.moment),
    ("grad_u", |p| p.grad_u),
    ("hess_u", |p| p.hess_u),
    ("plain", |p| p.plain),
];

impl EnsembleStats {
    pub fn from_samples(scenario: &str, samples: &[FunctionalSamples]) -> EnsembleStats {
        let times = samples.first().map(|s| s.times.clone()).unwrap_or_default();
        let weights = samples
            .iter()
            .map(|s| WeightStats {
                weight: s.weight.clone(),
                functionals: FUNCTIONALS
                    .iter()
                    .map(|(name, f)| FunctionalStats {
                        name: (*name).to_string(),
                        rows: (0..s.times.len())
                            .map(|j| {
                                let col = s.column(j, f);
                                let e = Estimate::from_samples(&col);
                                StatRow {
                                    t: s.times[j],
                                    mean: e.mean,
                                    stderr: e.stderr,
                                    min: col.iter().copied().fold(f64::INFINITY, f64::min),
                                    max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                                }
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        EnsembleStats {
            scenario: scenario.to_string(),
            paths: samples.first().map_or(0, |s| s.paths()),
            times,
            weights,
        }
    }

    /// One CSV per weight: `t` then `name,name_stderr,name_min,name_max` per functional.
    pub fn to_csv(&self, weight: usize) -> String {
        let w = &self.weights[weight];
        let mut out = String::from("t");
        for f in &w.functionals {
            out.push_str(&format!(",{0},{0}_stderr,{0}_min,{0}_max", f.name));
        }
        out.push('\n');
        for (j, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for f in &w.functionals {
                let r = f.rows[j];
                out.push_str(&format!(",{},{},{},{}", r.mean, r.stderr, r.min, r.max));
            }
            out.push('\n');
        }
        out
    }
}

/// Result of [`run_ensemble`].
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub samples: Vec<FunctionalSamples>,
    /// Checkpoint fields of the first `keep_trajectories` paths.
    pub trajectories: Vec<Trajectory>,
    pub wall_clock_seconds: f64,
}

/// Solves the configured ensemble and evaluates every configured weight.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleRun> {
    let start = Instant::now();
    let grid = config.grid()?;
    let solver = config.solver()?;
    let coefficients = config.coefficients();
    let u0 = config.initial_field()?;
    let ladder = SeedLadder::new(config.ensemble.seed);
    let weights = config.built_weights()?;
    let samples = simulate(grid, coefficients.clone(), solver.clone(), &u0, &weights, config.ensemble.paths, |i| {
        main_path(&ladder, i, &solver)
    })?;
    let stepper = Stepper::new(grid, coefficients, solver.clone())?;
    let trajectories = (0..config.ensemble.keep_trajectories)
        .map(|i| stepper.solve(&u0, &main_path(&ladder, i, &solver)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleRun {
        stats: EnsembleStats::from_samples(&config.scenario, &samples),
        samples,
        trajectories,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// CSV of checkpoint fields: `t,x[,y],u`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let dim = traj.checkpoints.first().map_or(1, |(_, f)| f.grid().dim());
    out.push_str(if dim == 1 { "t,x,u\n" } else { "t,x,y,u\n" });
    for (t, f) in &traj.checkpoints {
        for (i, p) in f.grid().nodes() {
            if dim == 1 {
                out.push_str(&format!("{t},{},{}\n", p[0], f.values()[i]));
            } else {
                out.push_str(&format!("{t},{},{},{}\n", p[0], p[1], f.values()[i]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(noise: &str, paths: usize) -> EnsembleConfig {
        EnsembleConfig::from_toml_str(&format!(
            r#"
scenario = "unit"
[grid]
dim = 1
half_width = 8.0
points = 129
[time]
steps = 100
[coefficients]
potential = {{ kind = "zero" }}
noise = {noise}
[initial]
kind = "gaussian"
amplitude = 1.0
width = 1.0
[[weights]]
family = "quadratic"
gamma = 0.1
time_dependent = false
[ensemble]
paths = {paths}
seed = 11
keep_trajectories = 1
"#
        ))
        .unwrap()
    }

    #[test]
    fn deterministic_single_path_has_zero_stderr() {
        let run = run_ensemble(&config(r#"{ kind = "zero" }"#, 1)).unwrap();
        let h = &run.stats.weights[0].functionals[0];
        assert_eq!(h.name, "H");
        for r in &h.rows {
            assert_eq!(r.stderr, 0.0);
            assert_eq!(r.min, r.mean);
            assert_eq!(r.max, r.mean);
        }
        assert_eq!(run.trajectories.len(), 1);
        assert_eq!(run.trajectories[0].checkpoints.len(), 21);
    }

    #[test]
    fn stderr_scales_like_inverse_root_paths() {
        let noise = r#"{ kind = "constant", value = 0.5 }"#;
        let a = run_ensemble(&config(noise, 100)).unwrap();
        let b = run_ensemble(&config(noise, 400)).unwrap();
        let se = |r: &EnsembleRun| r.stats.weights[0].functionals[0].rows[20].stderr;
        let ratio = se(&a) / se(&b);
        assert!(ratio > 2.0 / 1.5 && ratio < 2.0 * 1.5, "ratio {ratio}");
    }

    #[test]
    fn runs_are_bit_identical_and_ordered() {
        let noise = r#"{ kind = "decay", amplitude = 0.3, exponent = 0.5 }"#;
        let a = run_ensemble(&config(noise, 16)).unwrap();
        let b = run_ensemble(&config(noise, 16)).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.samples, b.samples);
        for r in &a.stats.weights[0].functionals {
            for row in &r.rows {
                let slack = 1e-12 * row.max.abs().max(row.min.abs());
                assert!(row.min - slack <= row.mean && row.mean <= row.max + slack, "{}", r.name);
            }
        }
    }

    #[test]
    fn local_mass_of_gaussian() {
        let g = Grid::new(1, 8.0, 1601).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp()).unwrap();
        // ∫_{−1}^{1} e^{−2x²} dx = √(π/2)·erf(√2)
        let exact = (std::f64::consts::PI / 2.0).sqrt() * 0.954_499_736_103_641_6;
        assert!((local_mass(&u, 1.0) - exact).abs() < 2e-3);
        assert_eq!(local_mass(&Field::zeros(g), 3.0), 0.0);
    }
}
