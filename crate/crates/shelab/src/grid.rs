//! Truncated uniform grids in one or two dimensions, finite-difference
//! operators with homogeneous Dirichlet ghosts, and trapezoidal quadrature.
//!
//! Weighted norms take the *logarithm* of the weight so that Gaussian weights
//! such as `exp(|x|²)` on large boxes never saturate silently: a summand whose
//! log-magnitude leaves the `f64` range raises [`LabError::Overflow`].

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stats::pairwise_sum;

/// Largest `x` with `exp(x)` finite.
pub const LN_MAX: f64 = 709.782_712_893_384;

/// Uniform tensor grid on `[-L, L]^dim` with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
}

impl Grid {
    /// Builds a grid; `points` must be odd so the origin is a node.
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(LabError::InvalidGrid(format!("dimension {dim} is not 1 or 2")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(LabError::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        if points < 3 || points % 2 == 0 {
            return Err(LabError::InvalidGrid(format!("points per axis {points} must be odd and at least 3")));
        }
        Ok(Grid { dim, half_width, points, spacing: 2.0 * half_width / (points - 1) as f64 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of nodes, `N^dim`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of the `i`-th node along any axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        // Symmetric evaluation keeps the node set exactly closed under negation.
        let c = (self.points - 1) / 2;
        if i >= c {
            self.half_width * ((i - c) as f64 / c as f64)
        } else {
            -(self.half_width * ((c - i) as f64 / c as f64))
        }
    }

    /// Per-axis indices of a flat node index (row-major, axis 0 slowest).
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points, idx % self.points]
        }
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] * self.points + mi[1]
        }
    }

    /// Node coordinates; only the first `dim` entries are meaningful.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        if self.dim == 1 {
            [self.axis_coord(mi[0]), 0.0]
        } else {
            [self.axis_coord(mi[0]), self.axis_coord(mi[1])]
        }
    }

    /// Euclidean norm of the node position.
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    pub fn origin_index(&self) -> usize {
        let c = (self.points - 1) / 2;
        self.flat_index(&[c, c])
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        let last = self.points - 1;
        mi[..self.dim].iter().any(|&i| i == 0 || i == last)
    }

    /// Trapezoidal quadrature weight of a node.
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let mi = self.multi_index(idx);
        let last = self.points - 1;
        let mut w = 1.0;
        for &i in &mi[..self.dim] {
            w *= if i == 0 || i == last { 0.5 * self.spacing } else { self.spacing };
        }
        w
    }

    /// The grid with the same box and half the spacing (`2N - 1` points).
    pub fn refined(&self) -> Grid {
        Grid::new(self.dim, self.half_width, 2 * self.points - 1).expect("refinement of a valid grid")
    }

    /// Largest node radius (the corner in two dimensions).
    pub fn max_radius(&self) -> f64 {
        self.half_width * (self.dim as f64).sqrt()
    }

    /// Iterator over `(flat index, coordinates)` pairs.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, [f64; 2])> + '_ {
        (0..self.len()).map(move |i| (i, self.point(i)))
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(LabError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Real-valued samples on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("field values".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Field {
        Field { grid, values: vec![0.0; grid.len()] }
    }

    /// Samples `f` at every node; coordinates are passed as a `dim`-slice.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let values = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim])
            })
            .collect();
        Field::new(grid, values)
    }

    /// Like [`Field::from_fn`] but forces boundary nodes to zero.
    pub fn from_fn_dirichlet(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let values = (0..grid.len())
            .map(|i| {
                if grid.is_boundary(i) {
                    0.0
                } else {
                    let p = grid.point(i);
                    f(&p[..grid.dim])
                }
            })
            .collect();
        Field::new(grid, values)
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Nodewise product with `g(x)`.
    pub fn multiplied(&self, g: impl Fn(&[f64]) -> f64) -> Result<Field> {
        let dim = self.grid.dim;
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let p = self.grid.point(i);
                v * g(&p[..dim])
            })
            .collect();
        Field::new(self.grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at a neighbour offset along `axis`, with zero outside the grid.
    #[inline]
    fn neighbour(&self, mi: [usize; 2], axis: usize, forward: bool) -> f64 {
        let i = mi[axis];
        let j = if forward {
            if i + 1 >= self.grid.points {
                return 0.0;
            }
            i + 1
        } else {
            if i == 0 {
                return 0.0;
            }
            i - 1
        };
        let mut m = mi;
        m[axis] = j;
        self.values[self.grid.flat_index(&m)]
    }
}

/// One array per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    /// Squared Euclidean length at every node.
    pub fn norm_sq(&self) -> Field {
        let values = (0..self.grid.len()).map(|i| self.components.iter().map(|c| c[i] * c[i]).sum()).collect();
        Field::from_raw(self.grid, values)
    }
}

/// Five-point (or three-point) Laplacian with zero ghosts outside the grid.
pub fn laplacian(f: &Field) -> Field {
    let g = f.grid;
    let inv_h2 = 1.0 / (g.spacing * g.spacing);
    let values = (0..g.len())
        .map(|idx| {
            let mi = g.multi_index(idx);
            let c = f.values[idx];
            let mut acc = 0.0;
            for axis in 0..g.dim {
                acc += f.neighbour(mi, axis, false) - 2.0 * c + f.neighbour(mi, axis, true);
            }
            acc * inv_h2
        })
        .collect();
    Field::from_raw(g, values)
}

/// Centered first differences with zero ghosts outside the grid.
pub fn gradient(f: &Field) -> VectorField {
    let g = f.grid;
    let inv_2h = 0.5 / g.spacing;
    let components = (0..g.dim)
        .map(|axis| {
            (0..g.len())
                .map(|idx| {
                    let mi = g.multi_index(idx);
                    (f.neighbour(mi, axis, true) - f.neighbour(mi, axis, false)) * inv_2h
                })
                .collect()
        })
        .collect();
    VectorField { grid: g, components }
}

/// Trapezoidal quadrature of `exp(2 w(x)) f(x)²`, where `w` is the log-weight.
pub fn weighted_l2_sq(f: &Field, w: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let g = f.grid;
    let log_w: Vec<f64> = (0..g.len())
        .map(|i| {
            let p = g.point(i);
            w(&p[..g.dim])
        })
        .collect();
    weighted_l2_sq_table(f, &log_w)
}

/// [`weighted_l2_sq`] with the log-weight pre-tabulated on the nodes.
pub fn weighted_l2_sq_table(f: &Field, log_w: &[f64]) -> Result<f64> {
    let g = f.grid;
    if log_w.len() != g.len() {
        return Err(LabError::GridMismatch("log-weight table length".into()));
    }
    let mut terms = Vec::with_capacity(g.len());
    let mut worst = (0usize, f64::NEG_INFINITY);
    for (i, (&v, &lw)) in f.values.iter().zip(log_w).enumerate() {
        if v == 0.0 {
            terms.push(0.0);
            continue;
        }
        let two_w = 2.0 * lw;
        if two_w.is_nan() {
            return Err(LabError::NonFinite(format!("log-weight at node {i}")));
        }
        let log_mag = two_w + 2.0 * v.abs().ln() + g.quadrature_weight(i).ln();
        if log_mag > worst.1 {
            worst = (i, log_mag);
        }
        if log_mag > LN_MAX {
            return Err(LabError::Overflow { node: i, log_magnitude: log_mag });
        }
        let term = if two_w < LN_MAX { two_w.exp() * v * v * g.quadrature_weight(i) } else { log_mag.exp() };
        terms.push(term);
    }
    let total = pairwise_sum(&terms);
    if !total.is_finite() {
        return Err(LabError::Overflow { node: worst.0, log_magnitude: worst.1 });
    }
    Ok(total)
}

/// Unweighted `∫ f²`.
pub fn l2_sq(f: &Field) -> f64 {
    let g = f.grid;
    let terms: Vec<f64> = f.values.iter().enumerate().map(|(i, v)| v * v * g.quadrature_weight(i)).collect();
    pairwise_sum(&terms)
}

/// Trapezoidal quadrature of `f·g`.
pub fn inner(f: &Field, g: &Field) -> Result<f64> {
    f.grid.check_same(&g.grid)?;
    let grid = f.grid;
    let terms: Vec<f64> =
        f.values.iter().zip(&g.values).enumerate().map(|(i, (a, b))| a * b * grid.quadrature_weight(i)).collect();
    Ok(pairwise_sum(&terms))
}

/// Trapezoidal quadrature of `f·m` for a nodal multiplier table `m`.
pub fn integrate_weighted(f: &[f64], m: &[f64], grid: &Grid) -> f64 {
    let terms: Vec<f64> = f.iter().zip(m).enumerate().map(|(i, (a, b))| a * b * grid.quadrature_weight(i)).collect();
    pairwise_sum(&terms)
}

/// Edge-based discrete Dirichlet energy `Σ h^dim ((f_j − f_i)/h)²` over grid
/// edges, including the edges to the zero ghosts.
///
/// For fields vanishing on the boundary this equals `−(Δ_h f, f)` exactly, so
/// the discrete form `−‖∇f‖²` is consistent with [`laplacian`].
pub fn dirichlet_energy(f: &Field) -> f64 {
    edge_sum(f.grid(), |i, j| {
        let a = f.values[i];
        let b = j.map_or(0.0, |j| f.values[j]);
        (b - a) * (b - a)
    })
}

/// Sums `term(i, j) · h^dim / h²` over all forward edges `i → j` of the grid,
/// plus the edges from the first layer to the lower ghosts (`j = None`).
pub(crate) fn edge_sum(g: &Grid, term: impl Fn(usize, Option<usize>) -> f64) -> f64 {
    let scale = g.spacing.powi(g.dim as i32) / (g.spacing * g.spacing);
    let mut terms = Vec::with_capacity(g.len() * g.dim + g.points);
    for idx in 0..g.len() {
        let mi = g.multi_index(idx);
        for axis in 0..g.dim {
            if mi[axis] + 1 < g.points {
                let mut m = mi;
                m[axis] += 1;
                terms.push(term(idx, Some(g.flat_index(&m))));
            } else {
                terms.push(term(idx, None));
            }
            if mi[axis] == 0 {
                terms.push(term(idx, None));
            }
        }
    }
    scale * pairwise_sum(&terms)
}
