//! Time integration of one sample path of `du = (Δu + Vu)dt + Gu dW`.
//!
//! The Laplacian is treated by the θ-scheme on a Dirichlet box (boundary
//! nodes held at zero); the potential and noise terms are explicit Itô
//! Euler–Maruyama, optionally with the Milstein correction
//! `½G²u(ΔW² − Var ΔW)`. One step solves
//!
//! `(I − θΔtΔ_h)u⁺ = (I + (1−θ)ΔtΔ_h)u + ΔtVu + ΔW·Gu [+ Milstein]`
//!
//! by a precomputed Thomas factorization in one dimension and by conjugate
//! gradients (relative residual `1e-10`) in two.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::SharedCoefficients;
use crate::error::{LabError, Result};
use crate::grid::{l2_sq, Field, Grid};
use crate::stats::{pairwise_sum, Estimate};
use crate::stochastic::{sample_path, Clock, SeedLadder, TimeGrid, WienerPath};

/// Relative residual at which conjugate gradients stop.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Largest coefficient table (entries) cached per stepper.
const TABLE_BUDGET: usize = 1 << 22;

/// Treatment of the stochastic term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Plain Euler–Maruyama: strong order ½ for multiplicative noise.
    #[default]
    ItoExplicit,
    /// Euler–Maruyama plus `½G²u(ΔW² − Var ΔW)`: strong order 1.
    Milstein,
}

/// Time stepping parameters shared by every path of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub time_grid: TimeGrid,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub checkpoint_times: Vec<f64>,
    #[serde(default)]
    pub noise_mode: NoiseMode,
}

fn default_theta() -> f64 {
    0.5
}

/// Number of checkpoints in the default cadence `{0, 0.05, …, 1}`.
pub const DEFAULT_CHECKPOINTS: usize = 21;

impl SolverConfig {
    /// `θ = ½` with the default 21-point cadence; `steps` must be a multiple of 20.
    pub fn new(steps: usize) -> Result<SolverConfig> {
        SolverConfig::with_uniform_checkpoints(steps, DEFAULT_CHECKPOINTS)
    }

    pub fn with_uniform_checkpoints(steps: usize, count: usize) -> Result<SolverConfig> {
        if count < 2 {
            return Err(LabError::InvalidParameter("need at least the checkpoints 0 and 1".into()));
        }
        let times = (0..count).map(|k| k as f64 / (count - 1) as f64).collect();
        SolverConfig::with_checkpoints(steps, times)
    }

    pub fn with_checkpoints(steps: usize, checkpoint_times: Vec<f64>) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            time_grid: TimeGrid::new(steps)?,
            theta: 0.5,
            checkpoint_times,
            noise_mode: NoiseMode::ItoExplicit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn theta(mut self, theta: f64) -> Result<SolverConfig> {
        self.theta = theta;
        self.validate()?;
        Ok(self)
    }

    pub fn noise_mode(mut self, mode: NoiseMode) -> SolverConfig {
        self.noise_mode = mode;
        self
    }

    /// Checks `θ ∈ [0,1]` and that checkpoints are strictly increasing
    /// knots starting at 0 and ending at 1.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(LabError::InvalidParameter(format!("θ = {} outside [0,1]", self.theta)));
        }
        let c = &self.checkpoint_times;
        if c.first() != Some(&0.0) || c.last() != Some(&1.0) {
            return Err(LabError::InvalidParameter("checkpoints must start at 0 and end at 1".into()));
        }
        if c.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidParameter("checkpoints must be strictly increasing".into()));
        }
        for &t in c {
            if self.time_grid.knot_index(t).is_none() {
                return Err(LabError::InvalidParameter(format!(
                    "checkpoint {t} is not a knot of a {}-step grid",
                    self.time_grid.steps()
                )));
            }
        }
        Ok(())
    }

    /// Knot indices of the checkpoints.
    pub fn checkpoint_indices(&self) -> Vec<usize> {
        self.checkpoint_times.iter().map(|&t| self.time_grid.knot_index(t).expect("validated checkpoint")).collect()
    }

    /// The same cadence on the grid with twice as many steps.
    pub fn refined(&self) -> SolverConfig {
        SolverConfig { time_grid: self.time_grid.refined(), ..self.clone() }
    }
}

/// Checkpointed solution of one sample path.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<(f64, Field)>,
    pub path_seed: u64,
    pub config: SolverConfig,
}

impl Trajectory {
    pub fn field_at(&self, t: f64) -> Option<&Field> {
        self.checkpoints.iter().find(|(s, _)| (s - t).abs() <= 1e-12).map(|(_, f)| f)
    }

    pub fn last(&self) -> &Field {
        &self.checkpoints.last().expect("non-empty trajectory").1
    }
}

/// Coefficient values on the grid, one row per step or a single shared row.
struct CoefficientTable {
    rows: Option<Vec<f64>>,
    single_row: bool,
}

/// Precomputed linear algebra and coefficient tables for one grid and config.
pub struct Stepper {
    grid: Grid,
    coefficients: SharedCoefficients,
    config: SolverConfig,
    interior: Vec<usize>,
    /// Thomas sweep factors `c'_i` and `1/denominator_i` (one dimension).
    thomas: Option<(Vec<f64>, Vec<f64>)>,
    potential: CoefficientTable,
    noise: CoefficientTable,
}

impl Stepper {
    pub fn new(grid: Grid, coefficients: SharedCoefficients, config: SolverConfig) -> Result<Stepper> {
        config.validate()?;
        let interior: Vec<usize> = (0..grid.len()).filter(|&i| !grid.is_boundary(i)).collect();
        let dt = config.time_grid.dt();
        let h = grid.spacing();
        let r = config.theta * dt / (h * h);
        let thomas = (grid.dim() == 1).then(|| {
            let m = interior.len();
            let (a, d) = (-r, 1.0 + 2.0 * r);
            let mut cp = vec![0.0; m];
            let mut inv = vec![0.0; m];
            for i in 0..m {
                let denom = if i == 0 { d } else { d - a * cp[i - 1] };
                inv[i] = 1.0 / denom;
                cp[i] = a * inv[i];
            }
            (cp, inv)
        });
        let single_row = coefficients.is_time_independent();
        let rows = if single_row { 1 } else { config.time_grid.steps() };
        let cache = rows * grid.len() <= TABLE_BUDGET;
        let build = |f: &dyn Fn(f64, &[f64]) -> f64| -> CoefficientTable {
            let values = cache.then(|| {
                let mut v = Vec::with_capacity(rows * grid.len());
                for k in 0..rows {
                    let t = config.time_grid.knot(k);
                    for i in 0..grid.len() {
                        let p = grid.point(i);
                        v.push(f(t, &p[..grid.dim()]));
                    }
                }
                v
            });
            CoefficientTable { rows: values, single_row }
        };
        let c = coefficients.clone();
        let potential = build(&|t, x| c.potential(t, x));
        let noise = build(&|t, x| c.noise(t, x));
        Ok(Stepper { grid, coefficients, config, interior, thomas, potential, noise })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn coefficients(&self) -> &SharedCoefficients {
        &self.coefficients
    }

    fn fill_row(&self, table: &CoefficientTable, k: usize, potential: bool, out: &mut Vec<f64>) -> Option<usize> {
        let n = self.grid.len();
        if table.rows.is_some() {
            let row = if table.single_row { 0 } else { k };
            return Some(row * n);
        }
        let t = self.config.time_grid.knot(k);
        out.clear();
        for i in 0..n {
            let p = self.grid.point(i);
            let x = &p[..self.grid.dim()];
            out.push(if potential { self.coefficients.potential(t, x) } else { self.coefficients.noise(t, x) });
        }
        None
    }

    /// Advances `u` (boundary zero) by step `k` with increment `dw` of variance `var`.
    pub fn step_in_place(&self, u: &mut [f64], k: usize, dw: f64, var: f64, scratch: &mut Scratch) -> Result<()> {
        let g = &self.grid;
        let dt = self.config.time_grid.dt();
        let theta = self.config.theta;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        let v_off = self.fill_row(&self.potential, k, true, &mut scratch.v);
        let g_off = self.fill_row(&self.noise, k, false, &mut scratch.g);
        let v_row: &[f64] = match v_off {
            Some(o) => &self.potential.rows.as_ref().expect("cached")[o..o + g.len()],
            None => &scratch.v,
        };
        let g_row: &[f64] = match g_off {
            Some(o) => &self.noise.rows.as_ref().expect("cached")[o..o + g.len()],
            None => &scratch.g,
        };
        let milstein = match self.config.noise_mode {
            NoiseMode::ItoExplicit => 0.0,
            NoiseMode::Milstein => 0.5 * (dw * dw - var),
        };
        let rhs = &mut scratch.rhs;
        rhs.clear();
        rhs.resize(g.len(), 0.0);
        let explicit = (1.0 - theta) * dt;
        for &i in &self.interior {
            let lap = if explicit != 0.0 { discrete_laplacian(g, u, i) * inv_h2 } else { 0.0 };
            let gi = g_row[i];
            rhs[i] = u[i] + explicit * lap + dt * v_row[i] * u[i] + dw * gi * u[i] + milstein * gi * gi * u[i];
        }
        match &self.thomas {
            Some((cp, inv)) => {
                let r = theta * dt * inv_h2;
                let m = self.interior.len();
                let d = &mut scratch.work;
                d.clear();
                d.resize(m, 0.0);
                let a = -r;
                for j in 0..m {
                    let prev = if j == 0 { 0.0 } else { d[j - 1] };
                    d[j] = (rhs[j + 1] - a * prev) * inv[j];
                }
                for j in (0..m.saturating_sub(1)).rev() {
                    d[j] -= cp[j] * d[j + 1];
                }
                u[1..=m].copy_from_slice(d);
            }
            None => {
                if theta == 0.0 {
                    u.copy_from_slice(rhs);
                } else {
                    self.conjugate_gradient(u, scratch, theta * dt * inv_h2)?;
                }
            }
        }
        if !pairwise_sum(u).is_finite() {
            return Err(LabError::NonFinite(format!("solution after step {k}")));
        }
        Ok(())
    }

    /// Solves `(I − rΔ_h h²)x = rhs` on interior nodes, warm-started from `u`.
    fn conjugate_gradient(&self, u: &mut [f64], s: &mut Scratch, r: f64) -> Result<()> {
        let g = &self.grid;
        let apply = |x: &[f64], out: &mut [f64], interior: &[usize]| {
            for &i in interior {
                out[i] = x[i] - r * discrete_laplacian(g, x, i);
            }
        };
        let n = g.len();
        let norm_b = pairwise_sum(&s.rhs.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        if norm_b == 0.0 {
            u.fill(0.0);
            return Ok(());
        }
        let (res, dir, ad) = (&mut s.cg_r, &mut s.cg_p, &mut s.cg_ap);
        for buf in [&mut *res, &mut *dir, &mut *ad] {
            buf.clear();
            buf.resize(n, 0.0);
        }
        apply(u, ad, &self.interior);
        for &i in &self.interior {
            res[i] = s.rhs[i] - ad[i];
            dir[i] = res[i];
        }
        let dot = |a: &[f64], b: &[f64], idx: &[usize]| -> f64 {
            pairwise_sum(&idx.iter().map(|&i| a[i] * b[i]).collect::<Vec<_>>())
        };
        let mut rr = dot(res, res, &self.interior);
        let max_iter = 10 * self.interior.len().max(10);
        for _ in 0..max_iter {
            if rr.sqrt() <= CG_TOLERANCE * norm_b {
                return Ok(());
            }
            apply(dir, ad, &self.interior);
            let alpha = rr / dot(dir, ad, &self.interior);
            for &i in &self.interior {
                u[i] += alpha * dir[i];
                res[i] -= alpha * ad[i];
            }
            let rr_new = dot(res, res, &self.interior);
            let beta = rr_new / rr;
            for &i in &self.interior {
                dir[i] = res[i] + beta * dir[i];
            }
            rr = rr_new;
        }
        if rr.sqrt() <= CG_TOLERANCE * norm_b {
            Ok(())
        } else {
            Err(LabError::SolverDiverged { iterations: max_iter, residual: rr.sqrt() / norm_b })
        }
    }

    /// One step of a field; `k` selects the coefficient time `t_k`.
    pub fn step(&self, u: &Field, k: usize, dw: f64, var: f64) -> Result<Field> {
        self.check_grid(u)?;
        let mut v = dirichlet_values(u);
        self.step_in_place(&mut v, k, dw, var, &mut Scratch::default())?;
        Ok(Field::from_raw(self.grid, v))
    }

    fn check_grid(&self, u: &Field) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(LabError::GridMismatch("initial field and stepper grids differ".into()));
        }
        Ok(())
    }

    /// Runs one path, calling `observe(index, t, field)` at every checkpoint.
    pub fn run_observed(
        &self,
        u0: &Field,
        path: &WienerPath,
        mut observe: impl FnMut(usize, f64, &Field) -> Result<()>,
    ) -> Result<()> {
        self.check_grid(u0)?;
        if path.time_grid() != &self.config.time_grid {
            return Err(LabError::InvalidParameter(format!(
                "path has {} steps, solver {}",
                path.time_grid().steps(),
                self.config.time_grid.steps()
            )));
        }
        let marks = self.config.checkpoint_indices();
        let mut u = dirichlet_values(u0);
        let mut scratch = Scratch::default();
        let mut next = 0;
        let mut emit = |k: usize, u: &[f64], next: &mut usize| -> Result<()> {
            if *next < marks.len() && marks[*next] == k {
                let f = Field::from_raw(self.grid, u.to_vec());
                observe(*next, self.config.checkpoint_times[*next], &f)?;
                *next += 1;
            }
            Ok(())
        };
        emit(0, &u, &mut next)?;
        for (k, (&dw, &var)) in path.increments().iter().zip(path.variances()).enumerate() {
            self.step_in_place(&mut u, k, dw, var, &mut scratch)?;
            emit(k + 1, &u, &mut next)?;
        }
        Ok(())
    }

    pub fn solve(&self, u0: &Field, path: &WienerPath) -> Result<Trajectory> {
        let mut checkpoints = Vec::with_capacity(self.config.checkpoint_times.len());
        self.run_observed(u0, path, |_, t, f| {
            checkpoints.push((t, f.clone()));
            Ok(())
        })?;
        Ok(Trajectory { checkpoints, path_seed: path.seed(), config: self.config.clone() })
    }
}

/// Reusable per-path buffers.
#[derive(Default)]
pub struct Scratch {
    v: Vec<f64>,
    g: Vec<f64>,
    rhs: Vec<f64>,
    work: Vec<f64>,
    cg_r: Vec<f64>,
    cg_p: Vec<f64>,
    cg_ap: Vec<f64>,
}

fn dirichlet_values(u: &Field) -> Vec<f64> {
    let g = u.grid();
    u.values().iter().enumerate().map(|(i, &v)| if g.is_boundary(i) { 0.0 } else { v }).collect()
}

/// `h²Δ_h u` at an interior node.
fn discrete_laplacian(g: &Grid, u: &[f64], i: usize) -> f64 {
    let n = g.points_per_axis();
    let c = u[i];
    let mut acc = u[i - 1] - 2.0 * c + u[i + 1];
    if g.dim() == 2 {
        acc += u[i - n] - 2.0 * c + u[i + n];
    }
    acc
}

/// One-shot convenience wrapper around [`Stepper::solve`].
pub fn solve_path(
    u0: &Field,
    coefficients: SharedCoefficients,
    path: &WienerPath,
    config: &SolverConfig,
) -> Result<Trajectory> {
    Stepper::new(*u0.grid(), coefficients, config.clone())?.solve(u0, path)
}

/// Successive-refinement errors and observed orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Time steps (or points per axis) of each level.
    pub levels: Vec<usize>,
    /// RMS over paths of `‖u_ℓ(1) − u_{ℓ+1}(1)‖` on the coarse nodes.
    pub differences: Vec<Estimate>,
    /// `log₂(d_ℓ/d_{ℓ+1})`.
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    fn from_squared(levels: Vec<usize>, sq: Vec<Vec<f64>>) -> ConvergenceReport {
        let differences: Vec<Estimate> = sq
            .iter()
            .map(|s| {
                let e = Estimate::from_samples(s);
                let rms = e.mean.sqrt();
                // Delta method for the square root.
                let se = if rms > 0.0 { e.stderr / (2.0 * rms) } else { 0.0 };
                Estimate { mean: rms, stderr: se }
            })
            .collect();
        let orders = differences.windows(2).map(|w| (w[0].mean / w[1].mean).log2()).collect();
        ConvergenceReport { levels, differences, orders }
    }

    pub fn mean_order(&self) -> f64 {
        self.orders.iter().sum::<f64>() / self.orders.len() as f64
    }
}

fn final_field(stepper: &Stepper, u0: &Field, path: &WienerPath) -> Result<Field> {
    let mut last = None;
    stepper.run_observed(u0, path, |_, _, f| {
        last = Some(f.clone());
        Ok(())
    })?;
    Ok(last.expect("checkpoint 1 is always recorded"))
}

/// Strong convergence in `Δt` on coupled paths: level `ℓ+1` uses the
/// Brownian-bridge refinement of level `ℓ`'s increments.
#[allow(clippy::too_many_arguments)]
pub fn time_convergence(
    u0: &Field,
    coefficients: SharedCoefficients,
    base: &SolverConfig,
    clock: &Clock,
    levels: usize,
    paths: usize,
    master_seed: u64,
) -> Result<ConvergenceReport> {
    use rayon::prelude::*;
    let configs: Vec<SolverConfig> =
        std::iter::successors(Some(base.clone()), |c| Some(c.refined())).take(levels).collect();
    let steppers = configs
        .iter()
        .map(|c| Stepper::new(*u0.grid(), coefficients.clone(), c.clone()))
        .collect::<Result<Vec<_>>>()?;
    let ladder = SeedLadder::new(master_seed);
    let bridge = ladder.child(1);
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| -> Result<Vec<f64>> {
            let mut path = sample_path(ladder.derive_seed(p as u64), &base.time_grid, clock)?;
            let mut finals = Vec::with_capacity(levels);
            for (l, s) in steppers.iter().enumerate() {
                if l > 0 {
                    path = path.refined(bridge.child(l as u64).derive_seed(p as u64))?;
                }
                finals.push(final_field(s, u0, &path)?);
            }
            Ok(finals
                .windows(2)
                .map(|w| {
                    let d: Vec<f64> = w[0].values().iter().zip(w[1].values()).map(|(a, b)| a - b).collect();
                    l2_sq(&Field::from_raw(*u0.grid(), d))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let sq = (0..levels - 1).map(|l| per_path.iter().map(|v| v[l]).collect()).collect();
    Ok(ConvergenceReport::from_squared(configs.iter().map(|c| c.time_grid.steps()).collect(), sq))
}

/// Deterministic convergence in `h` (`N → 2N−1`) at a fixed time grid,
/// comparing on the coarse nodes.
pub fn space_convergence(
    u0: impl Fn(&[f64]) -> f64,
    coefficients: SharedCoefficients,
    base_grid: Grid,
    config: &SolverConfig,
    levels: usize,
) -> Result<ConvergenceReport> {
    let grids: Vec<Grid> = std::iter::successors(Some(base_grid), |g| Some(g.refined())).take(levels).collect();
    let finals = grids
        .iter()
        .map(|g| {
            let f0 = Field::from_fn_dirichlet(*g, &u0)?;
            let s = Stepper::new(*g, coefficients.clone(), config.clone())?;
            final_field(&s, &f0, &WienerPath::zero(config.time_grid))
        })
        .collect::<Result<Vec<_>>>()?;
    let sq = finals
        .windows(2)
        .map(|w| {
            let coarse = *w[0].grid();
            let fine = *w[1].grid();
            let d: Vec<f64> = (0..coarse.len())
                .map(|i| {
                    let mi = coarse.multi_index(i);
                    let j = fine.flat_index(&[2 * mi[0], 2 * mi[1]][..coarse.dim()]);
                    w[0].values()[i] - w[1].values()[j]
                })
                .collect();
            vec![l2_sq(&Field::from_raw(coarse, d))]
        })
        .collect();
    Ok(ConvergenceReport::from_squared(grids.iter().map(Grid::points_per_axis).collect(), sq))
}

/// A shareable stepper handle.
pub type SharedStepper = Arc<Stepper>;
