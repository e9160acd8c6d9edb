//! Closed-form constants of the Hardy-type uniqueness argument and the
//! classical Gaussian oracle for the heat semigroup.
//!
//! With `γ = 1/(2δ)`:
//! * `α_γ = 1/4 + (1+√(8γ²+1))/(16γ²)` for `γ ≥ (1+√2)/2`, otherwise
//!   `(2γ+1)/(8γ²) + √(8γ+3)/(16γ²)`;
//! * the noise bound `(4γ²−1)/(8α_γγ(1+4γ))`;
//! * `m_μ = sup_{t∈[0,1]} |t(1−t) + (4μ(1−2t)−1)/(16μ²)|`;
//! * `α = (1 + 16μ²m_μ + √(1+32μ²m_μ))/(16μ²)`, the larger root of
//!   `4μ²(α − m_μ)² = α/2`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{weighted_l2_sq, Field, Grid};
use crate::stats::Estimate;

/// `(1+√2)/2`, where both branch pairs switch.
pub fn branch_point() -> f64 {
    0.5 * (1.0 + std::f64::consts::SQRT_2)
}

fn require_above_half(name: &str, v: f64) -> Result<()> {
    if v > 0.5 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::InvalidParameter(format!("{name} = {v} must exceed 1/2")))
    }
}

/// First branch of `α_γ` (valid for `γ ≥ (1+√2)/2`).
pub fn alpha_gamma_upper(gamma: f64) -> f64 {
    0.25 + (1.0 + (8.0 * gamma * gamma + 1.0).sqrt()) / (16.0 * gamma * gamma)
}

/// Second branch of `α_γ` (valid for `½ < γ < (1+√2)/2`).
pub fn alpha_gamma_lower(gamma: f64) -> f64 {
    (2.0 * gamma + 1.0) / (8.0 * gamma * gamma) + (8.0 * gamma + 3.0).sqrt() / (16.0 * gamma * gamma)
}

pub fn alpha_gamma(gamma: f64) -> Result<f64> {
    require_above_half("γ", gamma)?;
    Ok(if gamma >= branch_point() { alpha_gamma_upper(gamma) } else { alpha_gamma_lower(gamma) })
}

/// `(4γ²−1)/(8α_γγ(1+4γ))`; a scenario is admissible iff `‖G‖²∞` is below it.
pub fn noise_bound(gamma: f64) -> Result<f64> {
    let a = alpha_gamma(gamma)?;
    Ok((4.0 * gamma * gamma - 1.0) / (8.0 * a * gamma * (1.0 + 4.0 * gamma)))
}

/// `sup_t |t(1−t) + (4μ(1−2t)−1)/(16μ²)|` for any `μ > 0`.
///
/// The inner quadratic peaks at `t* = ½ − 1/(4μ)` with value `¼`, and its
/// largest magnitude at an endpoint is `(4μ+1)/(16μ²)` at `t = 1`; the sup is
/// the larger of the two (the peak lies outside `[0,1]` only when `μ ≤ ½`, in
/// which case the endpoint value already exceeds `¼`).
pub fn m_mu_any(mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(LabError::InvalidParameter(format!("μ = {mu} must be positive")));
    }
    Ok(0.25f64.max((4.0 * mu + 1.0) / (16.0 * mu * mu)))
}

/// `m_μ` by its two-branch closed form, for `μ > ½`.
pub fn m_mu(mu: f64) -> Result<f64> {
    require_above_half("μ", mu)?;
    Ok(if mu >= branch_point() { 0.25 } else { (4.0 * mu + 1.0) / (16.0 * mu * mu) })
}

/// Brute-force `m_μ` over a uniform `t`-grid with `points` nodes.
pub fn m_mu_brute_force(mu: f64, points: usize) -> f64 {
    (0..points)
        .map(|k| {
            let t = k as f64 / (points - 1) as f64;
            (t * (1.0 - t) + (4.0 * mu * (1.0 - 2.0 * t) - 1.0) / (16.0 * mu * mu)).abs()
        })
        .fold(0.0, f64::max)
}

/// Larger root of `4μ²(α − m)² = α/2`.
pub fn alpha_root_with(mu: f64, m: f64) -> f64 {
    (1.0 + 16.0 * mu * mu * m + (1.0 + 32.0 * mu * mu * m).sqrt()) / (16.0 * mu * mu)
}

pub fn alpha_root(mu: f64) -> Result<f64> {
    Ok(alpha_root_with(mu, m_mu(mu)?))
}

/// Residual `4μ²(α − m)² − α/2`.
pub fn alpha_root_residual(mu: f64, alpha: f64, m: f64) -> f64 {
    4.0 * mu * mu * (alpha - m) * (alpha - m) - 0.5 * alpha
}

/// Verdicts on the smallness condition for the transformed noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GCondition {
    /// `64μ³(α−m)²/(8μ²(α−m)² + α)`.
    pub direct_bound: f64,
    pub direct_pass: bool,
    /// `M̃0² < 4μ`.
    pub sufficient_pass: bool,
}

pub fn g_condition_check(mu: f64, alpha: f64, m: f64, m0_tilde: f64) -> GCondition {
    let d2 = (alpha - m) * (alpha - m);
    let direct_bound = 64.0 * mu.powi(3) * d2 / (8.0 * mu * mu * d2 + alpha);
    let g2 = m0_tilde * m0_tilde;
    GCondition { direct_bound, direct_pass: g2 <= direct_bound, sufficient_pass: g2 < 4.0 * mu }
}

/// Outcome of the Gaussian Hardy oracle for `f = e^{−x²/β²}` in one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    pub beta: f64,
    pub delta: f64,
    /// Closed-form rule `δ² > β² + 4`.
    pub finite: bool,
    pub half_width: f64,
    /// `‖e^{x²/δ²} e^Δ f‖²` on `[−L, L]`.
    pub norm_at_l: f64,
    /// The same on `[−2L, 2L]`.
    pub norm_at_2l: f64,
}

impl HardyReport {
    pub fn growth(&self) -> f64 {
        self.norm_at_2l / self.norm_at_l
    }
}

/// Truncated weighted norm of `e^Δ f` on `[−L, L]` with spacing `1/64`.
pub fn hardy_truncated_norm(beta: f64, delta: f64, half_width: f64) -> Result<f64> {
    let n = (2.0 * half_width * 64.0).round() as usize + 1;
    let n = if n % 2 == 0 { n + 1 } else { n };
    let grid = Grid::new(1, half_width, n)?;
    let s = beta * beta + 4.0;
    let amp = (beta * beta / s).sqrt();
    let f = Field::from_fn(grid, |x| amp * (-x[0] * x[0] / s).exp())?;
    let inv_d2 = if delta.is_infinite() { 0.0 } else { 1.0 / (delta * delta) };
    weighted_l2_sq(&f, |x| x[0] * x[0] * inv_d2)
}

pub fn hardy_heat_oracle(beta: f64, delta: f64, half_width: f64) -> Result<HardyReport> {
    if !(beta > 0.0 && delta > 0.0) {
        return Err(LabError::InvalidParameter("β and δ must be positive".into()));
    }
    Ok(HardyReport {
        beta,
        delta,
        finite: delta * delta > beta * beta + 4.0,
        half_width,
        norm_at_l: hardy_truncated_norm(beta, delta, half_width)?,
        norm_at_2l: hardy_truncated_norm(beta, delta, 2.0 * half_width)?,
    })
}

/// One `μ` row of the threshold table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEntry {
    pub mu: f64,
    pub m_mu: f64,
    pub alpha_root: f64,
}

/// All constants derived from `δ` (through `γ = 1/(2δ)`) and a list of `μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub gamma: f64,
    pub delta: f64,
    pub alpha_gamma: f64,
    pub noise_bound: f64,
    pub mu_entries: Vec<MuEntry>,
    pub hardy_delta_threshold: f64,
}

impl ThresholdTable {
    pub fn from_delta(delta: f64, mus: &[f64]) -> Result<ThresholdTable> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(LabError::InvalidParameter(format!("δ = {delta} must lie in (0,1)")));
        }
        ThresholdTable::from_gamma(1.0 / (2.0 * delta), mus)
    }

    pub fn from_gamma(gamma: f64, mus: &[f64]) -> Result<ThresholdTable> {
        let mu_entries = mus
            .iter()
            .map(|&mu| Ok(MuEntry { mu, m_mu: m_mu(mu)?, alpha_root: alpha_root(mu)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThresholdTable {
            gamma,
            delta: 1.0 / (2.0 * gamma),
            alpha_gamma: alpha_gamma(gamma)?,
            noise_bound: noise_bound(gamma)?,
            mu_entries,
            hardy_delta_threshold: 2.0,
        })
    }
}

/// Exponent `αR²M̃0²/4 − R²(4(1−ε)²μ²−1)/(32μ)` of the local-mass bound.
pub fn uniqueness_exponent(alpha: f64, m0_tilde_sq: f64, mu: f64, eps: f64, r: f64) -> f64 {
    r * r * uniqueness_slope(alpha, m0_tilde_sq, mu, eps)
}

/// Coefficient of `R²` in [`uniqueness_exponent`].
pub fn uniqueness_slope(alpha: f64, m0_tilde_sq: f64, mu: f64, eps: f64) -> f64 {
    alpha * m0_tilde_sq / 4.0 - (4.0 * (1.0 - eps).powi(2) * mu * mu - 1.0) / (32.0 * mu)
}

/// `M̃0²` at which the exponent vanishes identically in `R`.
pub fn balance_point(alpha: f64, mu: f64, eps: f64) -> f64 {
    (4.0 * (1.0 - eps).powi(2) * mu * mu - 1.0) / (8.0 * alpha * mu)
}

/// Checks `1/(2(1−ε)) < μ < γ`.
pub fn check_mu_window(mu: f64, gamma: f64, eps: f64) -> Result<()> {
    let lo = 1.0 / (2.0 * (1.0 - eps));
    if mu > lo && mu < gamma {
        Ok(())
    } else {
        Err(LabError::Config(format!("μ = {mu} outside the admissible window ({lo}, {gamma})")))
    }
}

/// One row of the uniqueness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub shift: f64,
    /// `E ∫_{|x| ≤ εR/4} |ũ(½)|²`.
    pub lhs: Estimate,
    pub rhs_exponent: f64,
    /// `C · e^{exponent}`.
    pub rhs: f64,
    pub pass: bool,
}

/// The local-mass decay bound tabulated over `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub mu: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub m0_tilde_sq: f64,
    pub slope: f64,
    pub balance_point: f64,
    pub calibrated_c: f64,
    pub tolerance: f64,
    pub rows: Vec<SweepRow>,
}

impl UniquenessReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Assembles the sweep from measured local masses `lhs[i]` at `shifts[i]`
/// and a calibrated constant `c`.
#[allow(clippy::too_many_arguments)]
pub fn uniqueness_decay_check(
    shifts: &[f64],
    lhs: &[Estimate],
    mu: f64,
    gamma: f64,
    eps: f64,
    m0_tilde: f64,
    calibrated_c: f64,
    tolerance: f64,
) -> Result<UniquenessReport> {
    check_mu_window(mu, gamma, eps)?;
    let alpha = alpha_root(mu)?;
    let g2 = m0_tilde * m0_tilde;
    let rows = shifts
        .iter()
        .zip(lhs)
        .map(|(&r, &l)| {
            let e = uniqueness_exponent(alpha, g2, mu, eps, r);
            let rhs = calibrated_c * e.exp();
            SweepRow { shift: r, lhs: l, rhs_exponent: e, rhs, pass: l.mean <= rhs * (1.0 + tolerance) }
        })
        .collect();
    Ok(UniquenessReport {
        mu,
        epsilon: eps,
        alpha,
        m0_tilde_sq: g2,
        slope: uniqueness_slope(alpha, g2, mu, eps),
        balance_point: balance_point(alpha, mu, eps),
        calibrated_c,
        tolerance,
        rows,
    })
}
