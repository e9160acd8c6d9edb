//! Weighted second moments of the solution and the checks built on them.
//!
//! With `f = e^{w(t,x)} u` for a log-weight `w`, every path contributes at
//! every checkpoint
//! * `‖f‖²`, `‖Gf‖²`, `(Vf, f)`;
//! * `(Sf, f) = −‖∇f‖² + ∫ q f²` and `(S(Gf), Gf)`, where `q = |∇w|² + ∂_t w`
//!   is the weight's multiplier and `‖∇·‖²` is the edge-based discrete
//!   Dirichlet energy;
//! * an edgewise lower bound `−2∫G²|∇f|² − 2∫|∇G|²f² + ∫min(q,0)G²f²` for
//!   the latter, which holds exactly on the grid;
//! * auxiliary integrals used by the integrated and interior estimates.
//!
//! Expectations are sample means over paths, reduced by pairwise summation
//! in path order.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{check_assumption_a2, uniform_times, CoefficientBounds, Coefficients};
use crate::error::{LabError, Result};
use crate::grid::{edge_sum, Field, Grid, LN_MAX};
use crate::solver::Stepper;
use crate::stats::{pairwise_sum, Estimate};
use crate::stochastic::WienerPath;
use crate::weights::{LogWeight, WeightDescriptor};

/// Outcome of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// Monte Carlo noise dominates the signal; neither confirmed nor refuted.
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Verdict {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// `Fail` if any fails, else `Inconclusive` if any is, else `Pass`.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in verdicts {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Pass => {}
            }
        }
        out
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Per-path, per-checkpoint functionals of `f = e^w u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    /// `‖f‖²`
    pub h: f64,
    /// `‖Gf‖²`
    pub hg: f64,
    /// `(Vf, f)`
    pub vf: f64,
    /// `(Sf, f)`
    pub d: f64,
    /// `(S(Gf), Gf)`
    pub dg: f64,
    /// Edgewise lower bound for `dg`.
    pub dg_lower: f64,
    /// `‖∇f‖²` (edge-based).
    pub grad_f: f64,
    /// `∫|x|² f²`
    pub moment: f64,
    /// `∫ e^{2w} |∇u|²` with centered differences.
    pub grad_u: f64,
    /// `∫ e^{2w} |D²u|²` with second differences.
    pub hess_u: f64,
    /// Unweighted `‖u‖²`.
    pub plain: f64,
}

/// Weight and coefficient tables at the checkpoints, shared by all paths.
pub struct FunctionalEvaluator {
    grid: Grid,
    times: Vec<f64>,
    weight: WeightDescriptor,
    log_w: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    r2: Vec<f64>,
    quad: Vec<f64>,
}

impl FunctionalEvaluator {
    pub fn new(
        grid: Grid,
        times: &[f64],
        weight: &dyn LogWeight,
        coefficients: &dyn Coefficients,
    ) -> Result<FunctionalEvaluator> {
        let dim = grid.dim();
        let table = |f: &dyn Fn(f64, &[f64]) -> f64| -> Result<Vec<Vec<f64>>> {
            times
                .iter()
                .map(|&t| {
                    let row: Vec<f64> = grid.nodes().map(|(_, p)| f(t, &p[..dim])).collect();
                    if row.iter().any(|v| v.is_nan()) {
                        return Err(LabError::NonFinite(format!("tabulated value at t = {t}")));
                    }
                    Ok(row)
                })
                .collect()
        };
        Ok(FunctionalEvaluator {
            grid,
            times: times.to_vec(),
            weight: weight.descriptor(),
            log_w: table(&|t, x| weight.log_weight(t, x))?,
            q: table(&|t, x| weight.s_potential(t, x))?,
            v: table(&|t, x| coefficients.potential(t, x))?,
            g: table(&|t, x| coefficients.noise(t, x))?,
            r2: (0..grid.len()).map(|i| grid.radius(i).powi(2)).collect(),
            quad: (0..grid.len()).map(|i| grid.quadrature_weight(i)).collect(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weight(&self) -> &WeightDescriptor {
        &self.weight
    }

    fn integrate(&self, terms: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = terms.zip(&self.quad).map(|(a, w)| a * w).collect();
        pairwise_sum(&v)
    }

    /// All functionals of `u` at checkpoint `j`.
    pub fn evaluate(&self, j: usize, u: &Field) -> Result<PathFunctionals> {
        if *u.grid() != self.grid {
            return Err(LabError::GridMismatch("field and evaluator grids differ".into()));
        }
        let (lw, q, v, g) = (&self.log_w[j], &self.q[j], &self.v[j], &self.g[j]);
        let uv = u.values();
        let mut f = Vec::with_capacity(uv.len());
        let mut e2w = Vec::with_capacity(uv.len());
        for (i, (&ui, &wi)) in uv.iter().zip(lw).enumerate() {
            let two_w = 2.0 * wi;
            e2w.push(if two_w < LN_MAX { two_w.exp() } else { f64::INFINITY });
            if ui == 0.0 {
                f.push(0.0);
                continue;
            }
            let log_mag = two_w + 2.0 * ui.abs().ln();
            if log_mag > LN_MAX - 20.0 {
                return Err(LabError::Overflow { node: i, log_magnitude: log_mag });
            }
            f.push(ui * wi.exp());
        }
        let h = self.integrate(f.iter().map(|x| x * x));
        let hg = self.integrate(f.iter().zip(g).map(|(x, gi)| (gi * x).powi(2)));
        let vf = self.integrate(f.iter().zip(v).map(|(x, vi)| vi * x * x));
        let qf = self.integrate(f.iter().zip(q).map(|(x, qi)| qi * x * x));
        let qgf = self.integrate(f.iter().zip(q).zip(g).map(|((x, qi), gi)| qi * (gi * x).powi(2)));
        let qneg = self.integrate(f.iter().zip(q).zip(g).map(|((x, qi), gi)| qi.min(0.0) * (gi * x).powi(2)));
        let moment = self.integrate(f.iter().zip(&self.r2).map(|(x, r2)| r2 * x * x));
        let plain = self.integrate(uv.iter().map(|x| x * x));
        let grad_f = edge_sum(&self.grid, |i, k| {
            let b = k.map_or(0.0, |k| f[k]);
            (b - f[i]).powi(2)
        });
        let grad_gf = edge_sum(&self.grid, |i, k| {
            let b = k.map_or(0.0, |k| g[k] * f[k]);
            (b - g[i] * f[i]).powi(2)
        });
        let split = edge_sum(&self.grid, |i, k| {
            let (fk, gk) = k.map_or((0.0, g[i]), |k| (f[k], g[k]));
            let gbar = 0.5 * (g[i] + gk);
            let fbar = 0.5 * (f[i] + fk);
            2.0 * gbar * gbar * (fk - f[i]).powi(2) + 2.0 * fbar * fbar * (gk - g[i]).powi(2)
        });
        let (grad_u, hess_u) = self.derivative_norms(uv, &e2w)?;
        Ok(PathFunctionals {
            h,
            hg,
            vf,
            d: -grad_f + qf,
            dg: -grad_gf + qgf,
            dg_lower: -split + qneg,
            grad_f,
            moment,
            grad_u,
            hess_u,
            plain,
        })
    }

    /// `∫e^{2w}|∇u|²` and `∫e^{2w}|D²u|²` with zero ghosts.
    fn derivative_norms(&self, u: &[f64], e2w: &[f64]) -> Result<(f64, f64)> {
        let g = &self.grid;
        let n = g.points_per_axis();
        let h = g.spacing();
        let dim = g.dim();
        let at = |mi: [usize; 2], axis: usize, delta: isize| -> f64 {
            let k = mi[axis] as isize + delta;
            if k < 0 || k >= n as isize {
                return 0.0;
            }
            let mut m = mi;
            m[axis] = k as usize;
            u[g.flat_index(&m[..dim])]
        };
        let mut grad = Vec::with_capacity(u.len());
        let mut hess = Vec::with_capacity(u.len());
        for (i, &ui) in u.iter().enumerate() {
            let mi = g.multi_index(i);
            let mut gsq = 0.0;
            let mut hsq = 0.0;
            for a in 0..dim {
                let d1 = (at(mi, a, 1) - at(mi, a, -1)) / (2.0 * h);
                let d2 = (at(mi, a, 1) - 2.0 * ui + at(mi, a, -1)) / (h * h);
                gsq += d1 * d1;
                hsq += d2 * d2;
            }
            if dim == 2 {
                let corner = |dx: isize, dy: isize| -> f64 {
                    let (x, y) = (mi[0] as isize + dx, mi[1] as isize + dy);
                    if x < 0 || y < 0 || x >= n as isize || y >= n as isize {
                        0.0
                    } else {
                        u[g.flat_index(&[x as usize, y as usize])]
                    }
                };
                let dxy = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h * h);
                hsq += 2.0 * dxy * dxy;
            }
            grad.push(if gsq == 0.0 { 0.0 } else { gsq * e2w[i] });
            hess.push(if hsq == 0.0 { 0.0 } else { hsq * e2w[i] });
        }
        let a = self.integrate(grad.into_iter());
        let b = self.integrate(hess.into_iter());
        if !(a.is_finite() && b.is_finite()) {
            return Err(LabError::Overflow { node: 0, log_magnitude: f64::INFINITY });
        }
        Ok((a, b))
    }
}

/// Functionals of every path at every checkpoint, in path order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSamples {
    pub times: Vec<f64>,
    pub seeds: Vec<u64>,
    pub weight: WeightDescriptor,
    /// `values[path][checkpoint]`
    pub values: Vec<Vec<PathFunctionals>>,
}

impl FunctionalSamples {
    pub fn paths(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, j: usize, f: impl Fn(&PathFunctionals) -> f64) -> Vec<f64> {
        self.values.iter().map(|p| f(&p[j])).collect()
    }

    pub fn estimate(&self, j: usize, f: impl Fn(&PathFunctionals) -> f64) -> Estimate {
        Estimate::from_samples(&self.column(j, f))
    }

    pub fn series(&self, f: impl Fn(&PathFunctionals) -> f64 + Copy) -> Vec<Estimate> {
        (0..self.times.len()).map(|j| self.estimate(j, f)).collect()
    }

    /// Keeps the first `m` paths.
    pub fn truncated(&self, m: usize) -> FunctionalSamples {
        FunctionalSamples {
            times: self.times.clone(),
            seeds: self.seeds[..m].to_vec(),
            weight: self.weight.clone(),
            values: self.values[..m].to_vec(),
        }
    }
}

/// Solves `paths` paths (path `i` produced by `path_for(i)`) and evaluates
/// every evaluator at every checkpoint. Paths run in parallel; the output
/// is ordered by path index.
pub fn evaluate_paths(
    stepper: &Stepper,
    u0: &Field,
    evaluators: &[FunctionalEvaluator],
    paths: usize,
    path_for: impl Fn(usize) -> Result<WienerPath> + Sync,
) -> Result<Vec<FunctionalSamples>> {
    for e in evaluators {
        if e.times != stepper.config().checkpoint_times {
            return Err(LabError::InvalidParameter("evaluator times differ from solver checkpoints".into()));
        }
    }
    let per_path: Vec<(u64, Vec<Vec<PathFunctionals>>)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let path = path_for(i)?;
            let seed = path.seed();
            let mut rows = vec![Vec::with_capacity(stepper.config().checkpoint_times.len()); evaluators.len()];
            stepper
                .run_observed(u0, &path, |j, _, field| {
                    for (e, row) in evaluators.iter().zip(rows.iter_mut()) {
                        row.push(e.evaluate(j, field)?);
                    }
                    Ok(())
                })
                .map_err(|source| LabError::PathFailed { index: i, seed, source: Box::new(source) })?;
            Ok((seed, rows))
        })
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = per_path.iter().map(|(s, _)| *s).collect();
    let mut out: Vec<FunctionalSamples> = evaluators
        .iter()
        .map(|e| FunctionalSamples {
            times: e.times.clone(),
            seeds: seeds.clone(),
            weight: e.weight.clone(),
            values: Vec::with_capacity(paths),
        })
        .collect();
    for (_, rows) in per_path {
        for (o, r) in out.iter_mut().zip(rows) {
            o.values.push(r);
        }
    }
    Ok(out)
}

/// `E‖f(t_j)‖²` as `(mean, stderr)`.
pub fn weighted_moment(samples: &FunctionalSamples, j: usize) -> Estimate {
    samples.estimate(j, |p| p.h)
}

/// `E(Sf, f)` at checkpoint `j`.
pub fn dirichlet_form(samples: &FunctionalSamples, j: usize) -> Estimate {
    samples.estimate(j, |p| p.d)
}

/// `E(S(Gf), Gf)` at checkpoint `j`.
pub fn dg_form(samples: &FunctionalSamples, j: usize) -> Estimate {
    samples.estimate(j, |p| p.dg)
}

/// Trapezoid weights: `F_j = Σ_k W[j][k] φ_k` integrates `φ` from `t_0` to `t_j`.
fn trapezoid_matrix(times: &[f64]) -> Vec<Vec<f64>> {
    let n = times.len();
    let mut w = vec![vec![0.0; n]; n];
    for j in 1..n {
        w[j] = w[j - 1].clone();
        let dt = times[j] - times[j - 1];
        w[j][j - 1] += 0.5 * dt;
        w[j][j] += 0.5 * dt;
    }
    w
}

/// Trapezoid integral of a nodal series over the whole checkpoint range.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let terms: Vec<f64> =
        times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).collect();
    pairwise_sum(&terms)
}

/// `F(t_j)` with `Ḟ = −2E(Vf,f)/H − H_G/H` and `F(0) = 0`.
pub fn f_correction(times: &[f64], h: &[f64], vf: &[f64], hg: &[f64]) -> Result<Vec<f64>> {
    if let Some(j) = h.iter().position(|&x| !(x > 0.0)) {
        return Err(LabError::Vanishing(format!("H(t_{j}) = {} is not positive", h[j])));
    }
    let rate: Vec<f64> = (0..h.len()).map(|k| -(2.0 * vf[k] + hg[k]) / h[k]).collect();
    let w = trapezoid_matrix(times);
    Ok(w.iter().map(|row| pairwise_sum(&row.iter().zip(&rate).map(|(a, b)| a * b).collect::<Vec<_>>())).collect())
}

/// Mean functionals with `F` and `Q = F + t(1−t)‖V‖²∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSeries {
    pub times: Vec<f64>,
    pub h: Vec<Estimate>,
    pub hg: Vec<Estimate>,
    pub vf: Vec<Estimate>,
    pub d: Vec<Estimate>,
    pub dg: Vec<Estimate>,
    pub dg_lower: Vec<Estimate>,
    /// Absent when some `H(t_j)` vanishes.
    pub f: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub weight: WeightDescriptor,
    pub paths: usize,
    pub bounds: CoefficientBounds,
}

impl FunctionalSeries {
    pub fn from_samples(samples: &FunctionalSamples, bounds: CoefficientBounds) -> FunctionalSeries {
        let h = samples.series(|p| p.h);
        let hg = samples.series(|p| p.hg);
        let vf = samples.series(|p| p.vf);
        let means = |s: &[Estimate]| s.iter().map(|e| e.mean).collect::<Vec<_>>();
        let f = f_correction(&samples.times, &means(&h), &means(&vf), &means(&hg)).ok();
        let q = f
            .as_ref()
            .map(|f| f.iter().zip(&samples.times).map(|(fj, t)| fj + t * (1.0 - t) * bounds.m * bounds.m).collect());
        FunctionalSeries {
            times: samples.times.clone(),
            h,
            hg,
            vf,
            d: samples.series(|p| p.d),
            dg: samples.series(|p| p.dg),
            dg_lower: samples.series(|p| p.dg_lower),
            f,
            q,
            weight: samples.weight.clone(),
            paths: samples.paths(),
            bounds,
        }
    }

    /// `H_G ≤ M0²H` and `|E(Vf,f)| ≤ M·H` within `k` standard errors.
    pub fn cauchy_schwarz_consistent(&self, k: f64) -> bool {
        let b = self.bounds;
        (0..self.times.len()).all(|j| {
            let (h, hg, vf) = (self.h[j], self.hg[j], self.vf[j]);
            hg.mean <= b.m0 * b.m0 * h.mean + k * (hg.stderr + b.m0 * b.m0 * h.stderr)
                && vf.mean.abs() <= b.m * h.mean + k * (vf.stderr + b.m * h.stderr)
        })
    }
}

/// One interior checkpoint of a convexity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityPoint {
    pub t: f64,
    pub second_diff: f64,
    /// Delta-method standard error of `second_diff`.
    pub stderr: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub series: FunctionalSeries,
    /// `log H + Q` at every checkpoint.
    pub log_h_plus_q: Vec<f64>,
    pub defect_floor: f64,
    pub points: Vec<ConvexityPoint>,
    pub discretization_allowance: f64,
    /// Some `H(t_j)` is below ten standard errors.
    pub vanishing: bool,
    pub verdict: Verdict,
    /// Verdict with the discretization allowance dropped (`s_j ≥ B − 3·scale·SE_j`).
    /// The allowance uses the largest third difference over the whole
    /// series, so an early transient can make it loose at later points;
    /// this stricter verdict shows whether the pass depends on it.
    pub noise_only_verdict: Verdict,
    /// `max_j [log H_j − (1−t_j) log H_0 − t_j log H_1]`.
    pub interpolation_excess: f64,
    /// `max(0, excess)/(M + M² + M0² + M1²)`; absent when the denominator
    /// vanishes but the excess is positive.
    pub calibrated_n: Option<f64>,
}

/// Second-difference convexity of `log H + Q` against the floor `B`.
///
/// Tolerance per point is `scale · (3·SE_j + 10·Δt_c·max|g'''|)`, where
/// `SE_j` is the delta-method standard error of the second difference
/// (linearized in the per-checkpoint means of `H`, `(Vf,f)` and `H_G`
/// and evaluated from per-path linear combinations, so correlations
/// across checkpoints are accounted for) and `g'''` is estimated by third
/// differences.
pub fn convexity_check(
    samples: &FunctionalSamples,
    bounds: CoefficientBounds,
    defect_floor: f64,
    tolerance_scale: f64,
) -> Result<ConvexityReport> {
    let times = &samples.times;
    let n = times.len();
    if n < 3 {
        return Err(LabError::InvalidParameter("convexity needs at least three checkpoints".into()));
    }
    let dtc = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - dtc).abs() > 1e-9) {
        return Err(LabError::InvalidParameter("convexity needs uniformly spaced checkpoints".into()));
    }
    let series = FunctionalSeries::from_samples(samples, bounds);
    let h: Vec<f64> = series.h.iter().map(|e| e.mean).collect();
    if let Some(j) = h.iter().position(|&x| !(x > 0.0)) {
        return Err(LabError::Vanishing(format!("H estimate at t = {} is {}", times[j], h[j])));
    }
    let q = series.q.clone().expect("H positive");
    let g: Vec<f64> = h.iter().zip(&q).map(|(a, b)| a.ln() + b).collect();
    let vanishing = series.h.iter().any(|e| e.mean < 10.0 * e.stderr);

    let third: Vec<f64> =
        (1..n.saturating_sub(2)).map(|j| (g[j + 2] - 3.0 * g[j + 1] + 3.0 * g[j] - g[j - 1]) / dtc.powi(3)).collect();
    let allowance = 10.0 * dtc * third.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let vf: Vec<f64> = series.vf.iter().map(|e| e.mean).collect();
    let hg: Vec<f64> = series.hg.iter().map(|e| e.mean).collect();
    let w = trapezoid_matrix(times);
    let points = (1..n - 1)
        .map(|j| {
            let s = (g[j - 1] - 2.0 * g[j] + g[j + 1]) / (dtc * dtc);
            let mut c = vec![0.0; n];
            c[j - 1] = 1.0 / (dtc * dtc);
            c[j] = -2.0 / (dtc * dtc);
            c[j + 1] = 1.0 / (dtc * dtc);
            // Sensitivity of Σ_l c_l F_l to the rate at checkpoint k.
            let a: Vec<f64> = (0..n).map(|k| (0..n).map(|l| c[l] * w[l][k]).sum()).collect();
            let coef_h: Vec<f64> = (0..n).map(|k| c[k] / h[k] + a[k] * (2.0 * vf[k] + hg[k]) / (h[k] * h[k])).collect();
            let coef_v: Vec<f64> = (0..n).map(|k| -2.0 * a[k] / h[k]).collect();
            let coef_g: Vec<f64> = (0..n).map(|k| -a[k] / h[k]).collect();
            let z: Vec<f64> = samples
                .values
                .iter()
                .map(|row| {
                    let terms: Vec<f64> =
                        (0..n).map(|k| coef_h[k] * row[k].h + coef_v[k] * row[k].vf + coef_g[k] * row[k].hg).collect();
                    pairwise_sum(&terms)
                })
                .collect();
            let se = Estimate::from_samples(&z).stderr;
            let tol = tolerance_scale * (3.0 * se + allowance);
            let verdict = if vanishing { Verdict::Inconclusive } else { Verdict::from_bool(s >= defect_floor - tol) };
            ConvexityPoint { t: times[j], second_diff: s, stderr: se, tolerance: tol, verdict }
        })
        .collect::<Vec<_>>();
    let verdict = if vanishing { Verdict::Inconclusive } else { Verdict::combine(points.iter().map(|p| p.verdict)) };
    let noise_only_verdict = if vanishing {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(points.iter().all(|p| p.second_diff >= defect_floor - 3.0 * tolerance_scale * p.stderr))
    };
    let (l0, l1) = (h[0].ln(), h[n - 1].ln());
    let excess = (0..n).map(|j| h[j].ln() - (1.0 - times[j]) * l0 - times[j] * l1).fold(f64::NEG_INFINITY, f64::max);
    let denom = bounds.m + bounds.m * bounds.m + bounds.m0 * bounds.m0 + bounds.m1 * bounds.m1;
    let calibrated_n = if denom > 0.0 {
        Some(excess.max(0.0) / denom)
    } else if excess <= 1e-12 {
        Some(0.0)
    } else {
        None
    };
    Ok(ConvexityReport {
        series,
        log_h_plus_q: g,
        defect_floor,
        points,
        discretization_allowance: allowance,
        vanishing,
        verdict,
        noise_only_verdict,
        interpolation_excess: excess,
        calibrated_n,
    })
}

impl ConvexityReport {
    /// CSV with columns `t,H,H_stderr,HG,D,DG,F,Q,logH_plus_Q,second_diff,tolerance,verdict`;
    /// endpoint rows leave the last three columns empty.
    pub fn to_csv(&self) -> String {
        let s = &self.series;
        let mut out = String::from("t,H,H_stderr,HG,D,DG,F,Q,logH_plus_Q,second_diff,tolerance,verdict\n");
        let f = s.f.as_ref().expect("report implies positive H");
        let q = s.q.as_ref().expect("report implies positive H");
        for j in 0..s.times.len() {
            let tail = if j == 0 || j + 1 == s.times.len() {
                ",,".to_string()
            } else {
                let p = &self.points[j - 1];
                format!("{},{},{}", p.second_diff, p.tolerance, p.verdict)
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.times[j],
                s.h[j].mean,
                s.h[j].stderr,
                s.hg[j].mean,
                s.d[j].mean,
                s.dg[j].mean,
                f[j],
                q[j],
                self.log_h_plus_q[j],
                tail
            ));
        }
        out
    }
}

/// Per-path positivity of the two terms of
/// `2(4γ − M0²)‖∇f‖² + 4γ²(8γ − M0²)∫|x|²f²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrandPositivity {
    pub min_gradient_term: f64,
    pub min_moment_term: f64,
    pub min_total: f64,
}

impl IntegrandPositivity {
    pub fn holds(&self, slack: f64) -> bool {
        self.min_gradient_term >= -slack && self.min_moment_term >= -slack && self.min_total >= -slack
    }
}

pub fn integrand_positivity(samples: &FunctionalSamples, gamma: f64, m0: f64) -> IntegrandPositivity {
    let g2 = m0 * m0;
    let mut out = IntegrandPositivity {
        min_gradient_term: f64::INFINITY,
        min_moment_term: f64::INFINITY,
        min_total: f64::INFINITY,
    };
    for p in samples.values.iter().flatten() {
        let a = 2.0 * (4.0 * gamma - g2) * p.grad_f;
        let b = 4.0 * gamma * gamma * (8.0 * gamma - g2) * p.moment;
        out.min_gradient_term = out.min_gradient_term.min(a);
        out.min_moment_term = out.min_moment_term.min(b);
        out.min_total = out.min_total.min(a + b);
    }
    out
}

/// Energy estimate with the sup taken over checkpoints only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `E sup_j ‖e^{φ_γ(t_j)|x|²}u(t_j)‖²`.
    pub lhs: Estimate,
    /// `E‖e^{γ|x|²}u₀‖²`.
    pub rhs0: Estimate,
    pub mgv: f64,
    /// Smallest `C` with `LHS ≤ e^{C·MGV}·RHS₀` (0 when `MGV = 0`).
    pub minimal_c: f64,
    pub tolerance: f64,
    pub semantics: String,
    pub verdict: Verdict,
}

/// `samples` must be evaluated with the time-dependent quadratic weight.
pub fn energy_check(samples: &FunctionalSamples, bounds: CoefficientBounds, tolerance: f64) -> EnergyReport {
    let sups: Vec<f64> = samples.values.iter().map(|row| row.iter().fold(0.0f64, |m, p| m.max(p.h))).collect();
    let lhs = Estimate::from_samples(&sups);
    let rhs0 = samples.estimate(0, |p| p.h);
    let mgv = bounds.mgv;
    let within = lhs.mean <= rhs0.mean * (1.0 + tolerance);
    let ratio = if rhs0.mean > 0.0 { (lhs.mean / rhs0.mean).ln().max(0.0) } else { 0.0 };
    let (minimal_c, verdict) = if mgv > 0.0 {
        let c = ratio / mgv;
        (c, Verdict::from_bool(c.is_finite()))
    } else {
        (0.0, Verdict::from_bool(within))
    };
    EnergyReport { lhs, rhs0, mgv, minimal_c, tolerance, semantics: "checkpoint-sup".into(), verdict }
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_change(a: f64, b: f64) -> f64 {
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        0.0
    } else {
        (a - b).abs() / m
    }
}

/// The three weighted time integrals and the three data terms of the
/// integrated estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedReport {
    /// `∫ E‖e^{γ|x|²}u‖² dt`
    pub mass: f64,
    /// `∫ t(1−t) E‖e^{γ|x|²}|x|u‖² dt`
    pub moment: f64,
    /// `∫ t(1−t) E‖e^{γ|x|²}∇u‖² dt`
    pub gradient: f64,
    pub h0: f64,
    pub h1: f64,
    /// `sup_t E‖u(t)‖²`
    pub sup_plain: f64,
    /// `(mass + moment + gradient)/(h0 + h1 + sup_plain)`, 0 for zero data.
    pub minimal_n: f64,
    pub verdict: Verdict,
}

/// Rejects `γ ≤ M0²/4` and coefficients failing A2 at `(γ, ε)`.
pub fn integrated_precondition(
    coefficients: &dyn Coefficients,
    grid: &Grid,
    gamma: f64,
    epsilon: f64,
    bounds: CoefficientBounds,
) -> Result<()> {
    if gamma <= bounds.m0 * bounds.m0 / 4.0 {
        return Err(LabError::Config(format!("γ = {gamma} must exceed ‖G‖²∞/4 = {}", bounds.m0 * bounds.m0 / 4.0)));
    }
    let report = check_assumption_a2(coefficients, gamma, epsilon, grid, &uniform_times(20))?;
    if !report.passed() {
        return Err(LabError::Config(format!(
            "noise violates the decay assumption by {} at {:?}",
            report.worst_violation, report.witness
        )));
    }
    Ok(())
}

/// `samples` must be evaluated with the time-independent weight `γ|x|²`.
pub fn integrated_estimate_check(samples: &FunctionalSamples) -> IntegratedReport {
    let t = &samples.times;
    let mean = |f: &dyn Fn(&PathFunctionals) -> f64| -> Vec<f64> {
        (0..t.len()).map(|j| samples.estimate(j, f).mean).collect()
    };
    let tt: Vec<f64> = t.iter().map(|s| s * (1.0 - s)).collect();
    let h = mean(&|p| p.h);
    let mass = trapezoid(t, &h);
    let moment = trapezoid(t, &mean(&|p| p.moment).iter().zip(&tt).map(|(a, b)| a * b).collect::<Vec<_>>());
    let gradient = trapezoid(t, &mean(&|p| p.grad_u).iter().zip(&tt).map(|(a, b)| a * b).collect::<Vec<_>>());
    let sup_plain = mean(&|p| p.plain).into_iter().fold(0.0, f64::max);
    let (h0, h1) = (h[0], h[t.len() - 1]);
    let data = h0 + h1 + sup_plain;
    let lhs = mass + moment + gradient;
    let minimal_n = if data > 0.0 { lhs / data } else { 0.0 };
    IntegratedReport {
        mass,
        moment,
        gradient,
        h0,
        h1,
        sup_plain,
        minimal_n,
        verdict: Verdict::from_bool(lhs.is_finite() && minimal_n.is_finite()),
    }
}

/// Interior regularity quantities from an ensemble with the mollified weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorMeasures {
    pub epsilon: f64,
    /// `sup_{t_j ≥ ε} E‖e^{γφ_a}∇u(t_j)‖²`
    pub sup_gradient: f64,
    /// `∫_ε¹ E‖e^{γφ_a}D²u‖² dt` by the trapezoid rule over checkpoints.
    pub hessian_integral: f64,
}

pub fn interior_measures(samples: &FunctionalSamples, epsilon: f64) -> InteriorMeasures {
    let idx: Vec<usize> = (0..samples.times.len()).filter(|&j| samples.times[j] >= epsilon - 1e-12).collect();
    let ts: Vec<f64> = idx.iter().map(|&j| samples.times[j]).collect();
    let grad: Vec<f64> = idx.iter().map(|&j| samples.estimate(j, |p| p.grad_u).mean).collect();
    let hess: Vec<f64> = idx.iter().map(|&j| samples.estimate(j, |p| p.hess_u).mean).collect();
    InteriorMeasures {
        epsilon,
        sup_gradient: grad.iter().copied().fold(0.0, f64::max),
        hessian_integral: trapezoid(&ts, &hess),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorReport {
    pub base: InteriorMeasures,
    /// Same quantities on the domain extended to `1.25 L`.
    pub extended: InteriorMeasures,
    pub gradient_growth: f64,
    pub hessian_growth: f64,
    /// Growth below 5% for both quantities.
    pub verdict: Verdict,
    /// `ε = 0` values on the base domain, reported without a verdict.
    pub contrast: Option<InteriorMeasures>,
}

pub fn interior_finiteness_check(
    base: InteriorMeasures,
    extended: InteriorMeasures,
    contrast: Option<InteriorMeasures>,
) -> InteriorReport {
    let growth = |a: f64, b: f64| {
        if a > 0.0 {
            (b - a) / a
        } else if b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let gradient_growth = growth(base.sup_gradient, extended.sup_gradient);
    let hessian_growth = growth(base.hessian_integral, extended.hessian_integral);
    let finite = base.sup_gradient.is_finite() && base.hessian_integral.is_finite();
    InteriorReport {
        base,
        extended,
        gradient_growth,
        hessian_growth,
        verdict: Verdict::from_bool(finite && gradient_growth.abs() < 0.05 && hessian_growth.abs() < 0.05),
        contrast,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{estimate_bounds, CoefficientSpec, Noise, Potential, SharedCoefficients};
    use crate::solver::SolverConfig;
    use crate::stochastic::{sample_path, Clock, SeedLadder};
    use crate::weights::QuadraticWeight;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn arc(spec: CoefficientSpec) -> SharedCoefficients {
        Arc::new(spec)
    }

    fn synthetic(times: &[f64], h: impl Fn(f64) -> f64) -> FunctionalSamples {
        FunctionalSamples {
            times: times.to_vec(),
            seeds: vec![0],
            weight: WeightDescriptor::Quadratic { gamma: 0.0, time_dependent: false },
            values: vec![times.iter().map(|&t| PathFunctionals { h: h(t), ..PathFunctionals::default() }).collect()],
        }
    }

    fn run(
        grid: Grid,
        spec: SharedCoefficients,
        u0: impl Fn(&[f64]) -> f64,
        weights: &[&dyn LogWeight],
        cfg: SolverConfig,
        paths: usize,
        seed: u64,
    ) -> Vec<FunctionalSamples> {
        let u0 = Field::from_fn_dirichlet(grid, u0).unwrap();
        let stepper = Stepper::new(grid, spec.clone(), cfg.clone()).unwrap();
        let evals: Vec<FunctionalEvaluator> = weights
            .iter()
            .map(|w| FunctionalEvaluator::new(grid, &cfg.checkpoint_times, *w, spec.as_ref()).unwrap())
            .collect();
        let ladder = SeedLadder::new(seed);
        evaluate_paths(&stepper, &u0, &evals, paths, |i| {
            sample_path(ladder.derive_seed(i as u64), &cfg.time_grid, &Clock::Identity)
        })
        .unwrap()
    }

    #[test]
    fn verdict_combination() {
        use Verdict::*;
        assert_eq!(Verdict::combine([Pass, Pass]), Pass);
        assert_eq!(Verdict::combine([Pass, Inconclusive]), Inconclusive);
        assert_eq!(Verdict::combine([Inconclusive, Fail, Pass]), Fail);
        assert_eq!(Fail.to_string(), "FAIL");
    }

    #[test]
    fn free_heat_moment_matches_gaussian_integral() {
        let g = Grid::new(1, 8.0, 257).unwrap();
        let w = QuadraticWeight::new(0.1, false).unwrap();
        let s = &run(
            g,
            arc(CoefficientSpec::zero()),
            |x| (-x[0] * x[0]).exp(),
            &[&w],
            SolverConfig::new(1000).unwrap(),
            1,
            0,
        )[0];
        for (j, &t) in s.times.iter().enumerate() {
            // ∫ (1+4t)^{-1} e^{−(2/(1+4t) − 0.2)x²} dx
            let a = 2.0 / (1.0 + 4.0 * t) - 0.2;
            let exact = (std::f64::consts::PI / a).sqrt() / (1.0 + 4.0 * t);
            let e = weighted_moment(s, j);
            assert_eq!(e.stderr, 0.0);
            assert!((e.mean / exact - 1.0).abs() <= 1e-3, "t = {t}: {} vs {exact}", e.mean);
        }
    }

    #[test]
    fn zero_ensemble_has_zero_functionals() {
        let g = Grid::new(1, 4.0, 33).unwrap();
        let w = QuadraticWeight::new(0.1, false).unwrap();
        let s = &run(g, arc(CoefficientSpec::zero()), |_| 0.0, &[&w], SolverConfig::new(20).unwrap(), 3, 0)[0];
        for j in 0..s.times.len() {
            assert_eq!(weighted_moment(s, j), Estimate::ZERO);
            assert_eq!(dirichlet_form(s, j), Estimate::ZERO);
            assert_eq!(dg_form(s, j), Estimate::ZERO);
        }
        assert!(FunctionalSeries::from_samples(s, CoefficientBounds::ZERO).f.is_none());
        assert!(matches!(convexity_check(s, CoefficientBounds::ZERO, 0.0, 1.0), Err(LabError::Vanishing(_))));
        let e = energy_check(s, CoefficientBounds::ZERO, 1e-3);
        assert_eq!(e.lhs.mean, 0.0);
        assert_eq!(e.verdict, Verdict::Pass);
        assert_eq!(integrated_estimate_check(s).minimal_n, 0.0);
        assert_eq!(interior_measures(s, 0.1).sup_gradient, 0.0);
    }

    #[test]
    fn dirichlet_form_of_eigenvector() {
        let l = 3.0;
        for &dim in &[1usize, 2] {
            let g = Grid::new(dim, l, if dim == 1 { 61 } else { 31 }).unwrap();
            let h = g.spacing();
            let u = Field::from_fn_dirichlet(g, |x| {
                x.iter().map(|&xi| (std::f64::consts::PI * (xi + l) / (2.0 * l)).sin()).product()
            })
            .unwrap();
            let lam = dim as f64 * 4.0 / (h * h) * (std::f64::consts::PI * h / (4.0 * l)).sin().powi(2);
            let w = QuadraticWeight::new(0.0, false).unwrap();
            let e = FunctionalEvaluator::new(g, &[0.0], &w, &CoefficientSpec::zero()).unwrap();
            let p = e.evaluate(0, &u).unwrap();
            assert!((p.d + lam * p.h).abs() <= 1e-10 * lam * p.h, "dim {dim}");
            assert!(p.d <= 0.0);
        }
    }

    #[test]
    fn unit_noise_gives_dg_equal_to_d() {
        let g = Grid::new(1, 4.0, 41).unwrap();
        let u = Field::from_fn_dirichlet(g, |x| (-x[0] * x[0]).exp() * (1.0 + x[0])).unwrap();
        let w = QuadraticWeight::new(0.3, false).unwrap();
        let spec = CoefficientSpec::new(Potential::Zero, Noise::Constant { value: 1.0 });
        let p = FunctionalEvaluator::new(g, &[0.0], &w, &spec).unwrap().evaluate(0, &u).unwrap();
        assert!((p.dg - p.d).abs() <= 1e-12 * p.d.abs());
        assert!((p.hg - p.h).abs() <= 1e-12 * p.h);
        let zero = FunctionalEvaluator::new(g, &[0.0], &w, &CoefficientSpec::zero()).unwrap().evaluate(0, &u).unwrap();
        assert_eq!((zero.dg, zero.hg), (0.0, 0.0));
    }

    #[test]
    fn edgewise_lower_bound_holds_per_path() {
        let g = Grid::new(2, 4.0, 33).unwrap();
        let spec = arc(CoefficientSpec::new(
            Potential::Cosine { amplitude: 0.5, frequency: 1.0 },
            Noise::Decay { amplitude: 0.4, exponent: 0.5, cutoff: None },
        ));
        let w = QuadraticWeight::new(0.2, true).unwrap();
        let s = &run(g, spec, |x| (-(x[0] * x[0] + x[1] * x[1])).exp(), &[&w], SolverConfig::new(40).unwrap(), 4, 2)[0];
        for p in s.values.iter().flatten() {
            assert!(p.dg >= p.dg_lower - 1e-12 * p.dg_lower.abs());
        }
    }

    #[test]
    fn f_correction_identities() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let h: Vec<f64> = t.iter().map(|s| (1.0 + s).powi(2)).collect();
        let zero = vec![0.0; t.len()];
        assert_eq!(f_correction(&t, &h, &zero, &zero).unwrap(), zero);
        let g2 = 0.09;
        let hg: Vec<f64> = h.iter().map(|x| g2 * x).collect();
        for (f, s) in f_correction(&t, &h, &zero, &hg).unwrap().iter().zip(&t) {
            assert!((f + g2 * s).abs() < 1e-14);
        }
        let c = 0.7;
        let vf: Vec<f64> = h.iter().map(|x| c * x).collect();
        let f = f_correction(&t, &h, &vf, &zero).unwrap();
        assert_eq!(f[0], 0.0);
        for (f, s) in f.iter().zip(&t) {
            assert!((f + 2.0 * c * s).abs() < 1e-14);
        }
        assert!(f_correction(&t, &zero, &zero, &zero).is_err());
    }

    #[test]
    fn log_linear_series_has_zero_second_differences() {
        let t: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let r = convexity_check(&synthetic(&t, |s| (1.7 * s).exp()), CoefficientBounds::ZERO, 0.0, 1.0).unwrap();
        for p in &r.points {
            assert!(p.second_diff.abs() <= 1e-10);
        }
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.calibrated_n, Some(0.0));
    }

    #[test]
    fn log_convex_series_passes_with_zero_tolerance() {
        let t: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let r = convexity_check(&synthetic(&t, |s| (s * s).exp()), CoefficientBounds::ZERO, 0.0, 0.0).unwrap();
        assert!(r.points.iter().all(|p| p.tolerance == 0.0 && p.second_diff > 0.0));
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn log_concave_series_fails() {
        let t: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let r = convexity_check(&synthetic(&t, |s| (-s * s).exp()), CoefficientBounds::ZERO, 0.0, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.calibrated_n, None);
        let lenient = convexity_check(&synthetic(&t, |s| (-s * s).exp()), CoefficientBounds::ZERO, -2.5, 1.0).unwrap();
        assert_eq!(lenient.verdict, Verdict::Pass);
    }

    #[test]
    fn noisy_near_zero_series_is_inconclusive() {
        let t = vec![0.0, 0.5, 1.0];
        let mut s = synthetic(&t, |_| 1.0);
        s.values = vec![
            t.iter().map(|_| PathFunctionals { h: 1.0, ..Default::default() }).collect(),
            t.iter().map(|_| PathFunctionals { h: -0.9, ..Default::default() }).collect(),
        ];
        s.seeds = vec![0, 1];
        let r = convexity_check(&s, CoefficientBounds::ZERO, 0.0, 1.0).unwrap();
        assert!(r.vanishing);
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn gaussian_heat_flow_is_log_convex() {
        // Closed form: H(t) ∝ (1+4t)^{-1} (2/(1+4t) − 2γ)^{-1/2}.
        let gamma = 0.1;
        let closed = |t: f64| (1.0 + 4.0 * t).recip() * (2.0 / (1.0 + 4.0 * t) - 2.0 * gamma).powf(-0.5);
        let t: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        let symbolic = convexity_check(&synthetic(&t, closed), CoefficientBounds::ZERO, 0.0, 0.0).unwrap();
        assert!(symbolic.points.iter().all(|p| p.second_diff > 0.0));
        let g = Grid::new(1, 8.0, 257).unwrap();
        let w = QuadraticWeight::new(gamma, false).unwrap();
        let s = &run(
            g,
            arc(CoefficientSpec::zero()),
            |x| (-x[0] * x[0]).exp(),
            &[&w],
            SolverConfig::new(1000).unwrap(),
            1,
            0,
        )[0];
        let r = convexity_check(s, CoefficientBounds::ZERO, 0.0, 1.0).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.points);
    }

    #[test]
    fn free_heat_energy_is_riccati_exact() {
        let g = Grid::new(1, 8.0, 257).unwrap();
        let w = QuadraticWeight::new(0.1, true).unwrap();
        let s = &run(
            g,
            arc(CoefficientSpec::zero()),
            |x| (-x[0] * x[0]).exp(),
            &[&w],
            SolverConfig::new(1000).unwrap(),
            1,
            0,
        )[0];
        let r = energy_check(s, CoefficientBounds::ZERO, 1e-3);
        assert_eq!(r.verdict, Verdict::Pass);
        assert_eq!(r.minimal_c, 0.0);
        for j in 1..s.times.len() {
            assert!(s.values[0][j].h <= s.values[0][j - 1].h * (1.0 + 1e-12));
        }
    }

    #[test]
    fn space_independent_noise_consistency() {
        let g = Grid::new(1, 8.0, 129).unwrap();
        let spec = arc(CoefficientSpec::new(
            Potential::Cosine { amplitude: 0.5, frequency: 1.0 },
            Noise::TimeLinear { scale: 0.2, slope: 1.0 },
        ));
        let bounds = estimate_bounds(spec.as_ref(), &g, &uniform_times(20)).unwrap();
        let w = QuadraticWeight::new(0.2, false).unwrap();
        let s = &run(g, spec, |x| (-4.0 * x[0] * x[0]).exp(), &[&w], SolverConfig::new(200).unwrap(), 40, 9)[0];
        let series = FunctionalSeries::from_samples(s, bounds);
        assert!(series.cauchy_schwarz_consistent(3.0));
        let q = series.q.unwrap();
        assert_eq!(series.f.unwrap()[0], 0.0);
        assert_eq!(q[0], 0.0);
    }

    #[test]
    fn integrand_positivity_above_threshold() {
        let g = Grid::new(1, 8.0, 129).unwrap();
        let spec =
            arc(CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: 0.4, exponent: 0.5, cutoff: None }));
        let w = QuadraticWeight::new(0.2, false).unwrap();
        let s = &run(g, spec, |x| (-x[0] * x[0]).exp(), &[&w], SolverConfig::new(100).unwrap(), 8, 1)[0];
        assert!(integrand_positivity(s, 0.2, 0.4).holds(1e-10));
        assert!(!integrand_positivity(s, 0.01, 0.4).holds(1e-10));
    }

    #[test]
    fn integrated_precondition_rejects_small_gamma() {
        let g = Grid::new(1, 8.0, 129).unwrap();
        let spec = CoefficientSpec::new(Potential::Zero, Noise::Decay { amplitude: 0.4, exponent: 0.5, cutoff: None });
        let b = estimate_bounds(&spec, &g, &uniform_times(4)).unwrap();
        assert!(matches!(integrated_precondition(&spec, &g, 0.03, 0.5, b), Err(LabError::Config(_))));
        assert!(integrated_precondition(&spec, &g, 1.0, 0.5, b).is_ok());
    }

    #[test]
    fn integrated_estimate_is_refinement_stable() {
        let w = QuadraticWeight::new(0.1, false).unwrap();
        let report = |n: usize, k: usize| {
            let g = Grid::new(1, 8.0, n).unwrap();
            let s = &run(
                g,
                arc(CoefficientSpec::zero()),
                |x| (-x[0] * x[0]).exp(),
                &[&w],
                SolverConfig::new(k).unwrap(),
                1,
                0,
            )[0];
            integrated_estimate_check(s)
        };
        let (a, b) = (report(129, 200), report(257, 400));
        assert!(a.minimal_n.is_finite() && a.minimal_n > 0.0);
        assert!(relative_change(a.minimal_n, b.minimal_n) < 0.2);
    }

    #[test]
    fn interior_measures_are_stable_under_extension() {
        let wt = crate::weights::build_mollified(0.5, 0.1, 16.0, 8000).unwrap();
        let w = crate::weights::MollifiedLogWeight(Arc::new(wt));
        let measure = |l: f64, n: usize, eps: f64| {
            let g = Grid::new(1, l, n).unwrap();
            let s = &run(
                g,
                arc(CoefficientSpec::zero()),
                |x| (-x[0] * x[0]).exp(),
                &[&w],
                SolverConfig::new(200).unwrap(),
                1,
                0,
            )[0];
            interior_measures(s, eps)
        };
        let base = measure(8.0, 257, 0.1);
        let ext = measure(10.0, 321, 0.1);
        let r = interior_finiteness_check(base, ext, Some(measure(8.0, 257, 0.0)));
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        assert!(r.contrast.unwrap().sup_gradient >= base.sup_gradient);
    }

    #[test]
    fn csv_has_specified_columns() {
        let t: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
        let r = convexity_check(&synthetic(&t, |s| (s * s).exp()), CoefficientBounds::ZERO, 0.0, 1.0).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,H,H_stderr,HG,D,DG,F,Q,logH_plus_Q,second_diff,tolerance,verdict");
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(2).unwrap().ends_with("PASS"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn stats_are_permutation_stable_in_mean(seed in 0u64..1000) {
            let t = vec![0.0, 0.5, 1.0];
            let mut stream = crate::stochastic::NormalStream::new(seed);
            let rows: Vec<Vec<PathFunctionals>> = (0..16)
                .map(|_| t.iter().map(|_| PathFunctionals { h: 2.0 + stream.next_normal(), ..Default::default() }).collect())
                .collect();
            let mut s = synthetic(&t, |_| 1.0);
            s.values = rows.clone();
            s.seeds = (0..16).collect();
            let a = weighted_moment(&s, 1);
            let mut rev = rows;
            rev.reverse();
            s.values = rev;
            let b = weighted_moment(&s, 1);
            prop_assert!((a.mean - b.mean).abs() <= 1e-14 * a.mean.abs());
            prop_assert!(a.stderr >= 0.0);
        }
    }
}
