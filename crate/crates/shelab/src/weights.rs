//! Log-weights `w(t,x)` used inside weighted norms `‖e^{w} u‖`.
//!
//! Three families are provided:
//! * [`QuadraticWeight`]: `γ|x|²`, or `φ_γ(t)|x|²` with `φ_γ(t) = γ/(1+4γt)`;
//! * [`MollifiedWeight`]: `γ φ_a(|x|)`, a radial weight growing like
//!   `r^{2−a}` at infinity, tabulated from the integral representation
//!   `φ′_a(r) = a r ∫_r^∞ ζ_a(s)/s ds`;
//! * [`TranslatedWeight`]: the moving Gaussian
//!   `μ|x + Rt(1−t)e₁|² + R²t(1−t)(1−2t)/6 − R²t(1−t)/(16μ)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::smoothstep5;
use crate::error::{LabError, Result};

/// A log-weight evaluator together with the pieces of the symmetric operator
/// `S = Δ + |∇w|² + ∂_t w` that the convexity functionals need.
pub trait LogWeight: Send + Sync {
    fn log_weight(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn time_derivative(&self, t: f64, x: &[f64]) -> f64;

    /// Multiplier `q` with `(S v, v) = −‖∇v‖² + ∫ q v²`.
    fn s_potential(&self, t: f64, x: &[f64]) -> f64 {
        let mut g = [0.0; 2];
        self.gradient(t, x, &mut g[..x.len()]);
        g[..x.len()].iter().map(|v| v * v).sum::<f64>() + self.time_derivative(t, x)
    }

    fn descriptor(&self) -> WeightDescriptor;
}

/// `φ_γ(t) = γ/(1+4γt)`.
pub fn phi_gamma(t: f64, gamma: f64) -> f64 {
    gamma / (1.0 + 4.0 * gamma * t)
}

/// `φ_γ′(t) = −4γ²/(1+4γt)²`.
pub fn phi_gamma_dot(t: f64, gamma: f64) -> f64 {
    let d = 1.0 + 4.0 * gamma * t;
    -4.0 * gamma * gamma / (d * d)
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `γ|x|²` or `φ_γ(t)|x|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticWeight {
    pub gamma: f64,
    pub time_dependent: bool,
}

impl QuadraticWeight {
    pub fn new(gamma: f64, time_dependent: bool) -> Result<QuadraticWeight> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(LabError::InvalidParameter(format!("weight level γ = {gamma} must be ≥ 0")));
        }
        Ok(QuadraticWeight { gamma, time_dependent })
    }

    pub fn level(&self, t: f64) -> f64 {
        if self.time_dependent {
            phi_gamma(t, self.gamma)
        } else {
            self.gamma
        }
    }
}

impl LogWeight for QuadraticWeight {
    fn log_weight(&self, t: f64, x: &[f64]) -> f64 {
        self.level(t) * norm_sq(x)
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let c = 2.0 * self.level(t);
        for (o, v) in out.iter_mut().zip(x) {
            *o = c * v;
        }
    }

    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        if self.time_dependent {
            phi_gamma_dot(t, self.gamma) * norm_sq(x)
        } else {
            0.0
        }
    }

    fn descriptor(&self) -> WeightDescriptor {
        WeightDescriptor::Quadratic { gamma: self.gamma, time_dependent: self.time_dependent }
    }
}

/// Parameters of the cutoff profile `ζ_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    pub a: f64,
    pub gamma: f64,
    pub r_hi: f64,
    pub r_lo: f64,
}

/// Name of the blend recorded in manifests.
pub const MOLLIFIER_BLEND: &str =
    "zeta = 2 r^-a * S((r - r_lo)/(r_hi - r_lo)), S = quintic smoothstep 6s^5-15s^4+10s^3";

impl MollifierParams {
    pub fn new(a: f64, gamma: f64) -> Result<MollifierParams> {
        if !(a > 0.0 && a < 1.0) {
            return Err(LabError::InvalidParameter(format!("mollifier exponent a = {a} must lie in (0,1)")));
        }
        if !(gamma >= 0.0) {
            return Err(LabError::InvalidParameter(format!("γ = {gamma} must be ≥ 0")));
        }
        let r_hi = gamma.max(2.0);
        Ok(MollifierParams { a, gamma, r_hi, r_lo: r_hi - 1.0 })
    }

    /// `ζ_a(r)`: zero below `r_lo`, `2r^{−a}` above `r_hi`, a quintic blend between.
    pub fn zeta(&self, r: f64) -> f64 {
        if r <= self.r_lo {
            0.0
        } else if r >= self.r_hi {
            2.0 * r.powf(-self.a)
        } else {
            let (s, _) = smoothstep5((r - self.r_lo) / (self.r_hi - self.r_lo));
            2.0 * r.powf(-self.a) * s
        }
    }

    /// `ζ_a′(r)`.
    pub fn zeta_prime(&self, r: f64) -> f64 {
        if r <= self.r_lo {
            0.0
        } else {
            let w = self.r_hi - self.r_lo;
            let (s, ds) = if r >= self.r_hi { (1.0, 0.0) } else { smoothstep5((r - self.r_lo) / w) };
            let base = 2.0 * r.powf(-self.a);
            let dbase = -self.a * base / r;
            dbase * s + base * ds / w
        }
    }

    /// Closed form of `φ_a` on `r ≥ r_hi`.
    pub fn phi_tail(&self, r: f64) -> f64 {
        (2.0 * r.powf(2.0 - self.a) - self.a) / (2.0 - self.a)
    }

    /// Closed form of `φ′_a` on `r ≥ r_hi`.
    pub fn dphi_tail(&self, r: f64) -> f64 {
        2.0 * r.powf(1.0 - self.a)
    }
}

// Five-point Gauss–Legendre rule on [-1, 1].
const GL_X: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_W: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

fn gauss(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    GL_X.iter().zip(GL_W).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Tabulated radial weight `φ_a` on `[0, r_max]`, used as `γ φ_a(|x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifiedWeight {
    params: MollifierParams,
    r_max: f64,
    dr: f64,
    /// `J(r_k) = ∫_{r_k}^∞ ζ_a(s)/s ds` on the mesh (only below `r_hi` is used).
    tail_integral: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl MollifiedWeight {
    pub fn params(&self) -> &MollifierParams {
        &self.params
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn mesh_spacing(&self) -> f64 {
        self.dr
    }

    /// Absolute tolerance of the residual check; a build fails when any mesh
    /// residual exceeds ten times this value.
    pub fn mesh_tolerance(&self) -> f64 {
        MESH_TOLERANCE
    }

    fn j_exact_segment(&self, lo: f64, hi: f64) -> f64 {
        // ∫_lo^hi ζ/s restricted to the blend interval (ζ/s has a closed-form
        // antiderivative above r_hi and vanishes below r_lo).
        let p = &self.params;
        let mut acc = 0.0;
        let b_lo = lo.max(p.r_lo);
        let b_hi = hi.min(p.r_hi);
        if b_hi > b_lo {
            acc += gauss(b_lo, b_hi, |s| p.zeta(s) / s);
        }
        let t_lo = lo.max(p.r_hi);
        if hi > t_lo {
            acc += 2.0 / p.a * (t_lo.powf(-p.a) - hi.powf(-p.a));
        }
        acc
    }

    /// `J(r) = ∫_r^∞ ζ_a(s)/s ds`.
    fn tail_integral_at(&self, r: f64) -> f64 {
        let p = &self.params;
        if r >= p.r_hi {
            return 2.0 / p.a * r.powf(-p.a);
        }
        let k = ((r / self.dr).floor() as usize).min(self.tail_integral.len() - 2) + 1;
        let node = k as f64 * self.dr;
        self.tail_integral[k] + self.j_exact_segment(r, node)
    }

    /// `φ′_a(r)`.
    pub fn dphi(&self, r: f64) -> f64 {
        let p = &self.params;
        if r >= p.r_hi {
            return p.dphi_tail(r);
        }
        p.a * r * self.tail_integral_at(r)
    }

    /// `φ_a(r)`; closed form above `r_hi`, cubic Hermite interpolation below.
    pub fn phi(&self, r: f64) -> f64 {
        let p = &self.params;
        if r >= p.r_hi {
            return p.phi_tail(r);
        }
        let k = ((r / self.dr).floor() as usize).min(self.phi.len() - 2);
        let r0 = k as f64 * self.dr;
        let s = (r - r0) / self.dr;
        let (y0, y1) = (self.phi[k], self.phi[k + 1]);
        let (m0, m1) = (self.dphi[k] * self.dr, self.dphi[k + 1] * self.dr);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1
    }

    /// `|φ″_a(r) − φ′_a(r)/r + aζ_a(r)|` with `φ″_a` from centered mesh differences of `φ′_a`.
    pub fn ode_residual(&self, r: f64) -> f64 {
        let h = self.dr;
        let d2 = (self.dphi(r + h) - self.dphi((r - h).max(0.0))) / (r + h - (r - h).max(0.0));
        (d2 - self.dphi(r) / r + self.params.a * self.params.zeta(r)).abs()
    }

    /// Rows `(r, φ_a, φ′_a, residual)` on the mesh (residual omitted at `r = 0`).
    pub fn table(&self) -> Vec<[f64; 4]> {
        (0..self.phi.len())
            .map(|k| {
                let r = k as f64 * self.dr;
                let res = if k == 0 || k + 1 == self.phi.len() { 0.0 } else { self.ode_residual(r) };
                [r, self.phi_table(k), self.dphi_table(k), res]
            })
            .collect()
    }

    fn phi_table(&self, k: usize) -> f64 {
        let r = k as f64 * self.dr;
        if r >= self.params.r_hi {
            self.params.phi_tail(r)
        } else {
            self.phi[k]
        }
    }

    fn dphi_table(&self, k: usize) -> f64 {
        let r = k as f64 * self.dr;
        if r >= self.params.r_hi {
            self.params.dphi_tail(r)
        } else {
            self.dphi[k]
        }
    }

    /// `max_r (φ_a(r) − r²)` over the mesh.
    pub fn quadratic_excess(&self) -> f64 {
        (0..self.phi.len())
            .map(|k| {
                let r = k as f64 * self.dr;
                self.phi_table(k) - r * r
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

const MESH_TOLERANCE: f64 = 1e-6;

/// Builds the tabulated weight on `mesh` uniform intervals of `[0, r_max]`.
pub fn build_mollified(a: f64, gamma: f64, r_max: f64, mesh: usize) -> Result<MollifiedWeight> {
    let params = MollifierParams::new(a, gamma)?;
    if !(r_max >= 4.0 * params.r_hi) {
        return Err(LabError::InvalidParameter(format!(
            "r_max = {r_max} must be at least 4·r_hi = {}",
            4.0 * params.r_hi
        )));
    }
    if mesh < 8 {
        return Err(LabError::InvalidParameter("mollifier mesh needs at least 8 intervals".into()));
    }
    check_mesh(tabulate(params, r_max, mesh))
}

fn tabulate(params: MollifierParams, r_max: f64, mesh: usize) -> MollifiedWeight {
    let a = params.a;
    let dr = r_max / mesh as f64;
    let n = mesh + 1;
    let mut w =
        MollifiedWeight { params, r_max, dr, tail_integral: vec![0.0; n], phi: vec![0.0; n], dphi: vec![0.0; n] };
    // Tail integral J on the mesh, accumulated downward from r_max.
    w.tail_integral[n - 1] = 2.0 / a * r_max.powf(-a);
    for k in (0..n - 1).rev() {
        let lo = k as f64 * dr;
        let hi = (k + 1) as f64 * dr;
        w.tail_integral[k] = w.tail_integral[k + 1] + w.j_exact_segment(lo, hi);
    }
    for k in 0..n {
        let r = k as f64 * dr;
        w.dphi[k] = if r >= params.r_hi { params.dphi_tail(r) } else { a * r * w.tail_integral[k] };
    }
    // φ from φ′, anchored at the closed form on the first node at or above r_hi.
    let anchor = ((params.r_hi / dr).ceil() as usize).min(n - 1);
    for k in anchor..n {
        w.phi[k] = params.phi_tail(k as f64 * dr);
    }
    // Segment from r_hi up to the anchor node is in the closed-form region.
    for k in (0..anchor).rev() {
        let lo = k as f64 * dr;
        let hi = (k + 1) as f64 * dr;
        let seg = {
            let mid = hi.min(params.r_hi);
            let inner = gauss(lo, mid, |s| w.dphi(s));
            let outer = if hi > params.r_hi { params.phi_tail(hi) - params.phi_tail(params.r_hi) } else { 0.0 };
            inner + outer
        };
        w.phi[k] = w.phi[k + 1] - seg;
    }
    w
}

fn check_mesh(w: MollifiedWeight) -> Result<MollifiedWeight> {
    let n = w.phi.len();
    let dr = w.dr;
    let worst = (1..n - 1).map(|k| w.ode_residual(k as f64 * dr)).fold(0.0, f64::max);
    if !(worst <= 10.0 * w.mesh_tolerance()) {
        return Err(LabError::InvalidParameter(format!(
            "mollifier mesh too coarse: ODE residual {worst:e} exceeds {:e}",
            10.0 * w.mesh_tolerance()
        )));
    }
    Ok(w)
}

/// `γ φ_a(|x|)` as a log-weight.
#[derive(Debug, Clone)]
pub struct MollifiedLogWeight(pub Arc<MollifiedWeight>);

impl LogWeight for MollifiedLogWeight {
    fn log_weight(&self, _t: f64, x: &[f64]) -> f64 {
        self.0.params.gamma * self.0.phi(norm_sq(x).sqrt())
    }

    fn gradient(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let r = norm_sq(x).sqrt();
        let c = if r > 0.0 { self.0.params.gamma * self.0.dphi(r) / r } else { 0.0 };
        for (o, v) in out.iter_mut().zip(x) {
            *o = c * v;
        }
    }

    fn time_derivative(&self, _t: f64, _x: &[f64]) -> f64 {
        0.0
    }

    fn descriptor(&self) -> WeightDescriptor {
        WeightDescriptor::Mollified {
            a: self.0.params.a,
            gamma: self.0.params.gamma,
            r_max: self.0.r_max,
            mesh: self.0.phi.len() - 1,
        }
    }
}

/// The moving Gaussian weight with center `−Rt(1−t)e₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslatedWeight {
    pub mu: f64,
    pub shift: f64,
}

impl TranslatedWeight {
    /// Requires `μ > ½`, the range in which the uniqueness argument uses it.
    pub fn new(mu: f64, shift: f64) -> Result<TranslatedWeight> {
        if !(mu > 0.5) {
            return Err(LabError::InvalidParameter(format!("translated weight needs μ > 1/2 (got {mu})")));
        }
        TranslatedWeight::with_any_level(mu, shift)
    }

    /// Any `μ > 0`; used for convexity experiments at weight levels where
    /// the weighted norms stay finite.
    pub fn with_any_level(mu: f64, shift: f64) -> Result<TranslatedWeight> {
        if !(mu > 0.0) || !(shift >= 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "translated weight needs μ > 0, R ≥ 0 (got {mu}, {shift})"
            )));
        }
        Ok(TranslatedWeight { mu, shift })
    }

    fn center_offset(&self, t: f64) -> f64 {
        self.shift * t * (1.0 - t)
    }
}

/// `μ|x + Rt(1−t)e₁|² + R²t(1−t)(1−2t)/6 − R²t(1−t)/(16μ)`.
pub fn translated_weight(mu: f64, r: f64, t: f64, x: &[f64]) -> f64 {
    let s = r * t * (1.0 - t);
    let y0 = x[0] + s;
    let rest: f64 = x[1..].iter().map(|v| v * v).sum();
    mu * (y0 * y0 + rest) + r * r * t * (1.0 - t) * (1.0 - 2.0 * t) / 6.0 - r * r * t * (1.0 - t) / (16.0 * mu)
}

/// `2μ|x + (R/4)e₁|² − R²/(32μ)`: twice the translated log-weight at `t = ½`.
pub fn weight_at_half(mu: f64, r: f64, x: &[f64]) -> f64 {
    let y0 = x[0] + 0.25 * r;
    let rest: f64 = x[1..].iter().map(|v| v * v).sum();
    2.0 * mu * (y0 * y0 + rest) - r * r / (32.0 * mu)
}

/// Pointwise lower bound of [`weight_at_half`] on `|x| ≤ εR/4`.
pub fn weight_at_half_lower_bound(mu: f64, r: f64, eps: f64) -> f64 {
    r * r * (4.0 * (1.0 - eps).powi(2) * mu * mu - 1.0) / (32.0 * mu)
}

impl LogWeight for TranslatedWeight {
    fn log_weight(&self, t: f64, x: &[f64]) -> f64 {
        translated_weight(self.mu, self.shift, t, x)
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let s = self.center_offset(t);
        for (k, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = 2.0 * self.mu * (v + if k == 0 { s } else { 0.0 });
        }
    }

    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        let (mu, r) = (self.mu, self.shift);
        let y0 = x[0] + self.center_offset(t);
        2.0 * mu * y0 * r * (1.0 - 2.0 * t) + r * r * (t * t - t + 1.0 / 6.0) - r * r * (1.0 - 2.0 * t) / (16.0 * mu)
    }

    /// The completed-square form
    /// `4μ²|y + c e₁|² + (R/2) y₁ − R²(1/12 − (1−2t)/(16μ) + 1/(64μ²))`
    /// with `y = x + Rt(1−t)e₁` and `c = (4μ(1−2t) − 1)R/(16μ²)`.
    fn s_potential(&self, t: f64, x: &[f64]) -> f64 {
        let (mu, r) = (self.mu, self.shift);
        let y0 = x[0] + self.center_offset(t);
        let c = (4.0 * mu * (1.0 - 2.0 * t) - 1.0) * r / (16.0 * mu * mu);
        let rest: f64 = x[1..].iter().map(|v| v * v).sum();
        let shifted = (y0 + c) * (y0 + c) + rest;
        4.0 * mu * mu * shifted + 0.5 * r * y0
            - r * r * (1.0 / 12.0 - (1.0 - 2.0 * t) / (16.0 * mu) + 1.0 / (64.0 * mu * mu))
    }

    fn descriptor(&self) -> WeightDescriptor {
        WeightDescriptor::Translated { mu: self.mu, shift: self.shift }
    }
}

/// Serializable weight description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightDescriptor {
    Quadratic { gamma: f64, time_dependent: bool },
    Mollified { a: f64, gamma: f64, r_max: f64, mesh: usize },
    Translated { mu: f64, shift: f64 },
}

impl WeightDescriptor {
    pub fn build(&self) -> Result<Arc<dyn LogWeight>> {
        Ok(match *self {
            WeightDescriptor::Quadratic { gamma, time_dependent } => {
                Arc::new(QuadraticWeight::new(gamma, time_dependent)?)
            }
            WeightDescriptor::Mollified { a, gamma, r_max, mesh } => {
                Arc::new(MollifiedLogWeight(Arc::new(build_mollified(a, gamma, r_max, mesh)?)))
            }
            WeightDescriptor::Translated { mu, shift } => Arc::new(TranslatedWeight::with_any_level(mu, shift)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi_gamma_examples() {
        assert_eq!(phi_gamma(0.0, 0.7), 0.7);
        assert!((phi_gamma(1.0, 1.0) - 0.2).abs() < 1e-15);
        assert!((phi_gamma(0.5, 2.0) - 0.4).abs() < 1e-15);
        assert!(phi_gamma(0.3, 1.0) > phi_gamma(0.4, 1.0));
    }

    proptest! {
        #[test]
        fn riccati_identity(t in 0.0f64..1.0, gamma in 0.0f64..10.0) {
            let p = phi_gamma(t, gamma);
            prop_assert!((4.0 * p * p + phi_gamma_dot(t, gamma)).abs() <= 1e-12 * (1.0 + gamma * gamma));
        }

        #[test]
        fn quadratic_s_potential_cancels_for_time_dependent_weight(t in 0.0f64..1.0, gamma in 0.0f64..3.0, x in -5.0f64..5.0) {
            let w = QuadraticWeight::new(gamma, true).unwrap();
            prop_assert!(w.s_potential(t, &[x]).abs() <= 1e-10 * (1.0 + x * x * gamma * gamma));
        }

        #[test]
        fn translated_weight_at_endpoints(mu in 0.6f64..3.0, r in 0.0f64..20.0, x in -5.0f64..5.0, y in -5.0f64..5.0) {
            for t in [0.0, 1.0] {
                let v = translated_weight(mu, r, t, &[x, y]);
                prop_assert!((v - mu * (x * x + y * y)).abs() <= 1e-15 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn completed_square_matches_generic_operator(mu in 0.2f64..3.0, r in 0.0f64..16.0, t in 0.0f64..1.0, x in -6.0f64..6.0, y in -3.0f64..3.0) {
            let w = TranslatedWeight::with_any_level(mu, r).unwrap();
            let mut g = [0.0; 2];
            w.gradient(t, &[x, y], &mut g);
            let generic = g[0] * g[0] + g[1] * g[1] + w.time_derivative(t, &[x, y]);
            let special = w.s_potential(t, &[x, y]);
            prop_assert!((generic - special).abs() <= 1e-9 * (1.0 + generic.abs()));
        }
    }

    #[test]
    fn translated_weight_examples() {
        assert_eq!(translated_weight(1.3, 0.0, 0.4, &[1.5]), 1.3 * 2.25);
        assert_eq!(translated_weight(1.3, 7.0, 0.0, &[1.5]), 1.3 * 2.25);
        assert!((translated_weight(1.0, 4.0, 0.5, &[0.0]) - 0.75).abs() < 1e-15);
        assert!(TranslatedWeight::new(0.5, 1.0).is_err());
        assert!(TranslatedWeight::new(0.51, 1.0).is_ok());
    }

    #[test]
    fn weight_at_half_examples_and_lower_bound() {
        assert_eq!(weight_at_half(0.8, 0.0, &[1.5, 0.5]), 2.0 * 0.8 * 2.5);
        assert!((weight_at_half(1.0, 4.0, &[-1.0]) + 0.5).abs() < 1e-15);
        for &(mu, r, eps) in &[(0.9, 8.0, 0.1), (1.5, 16.0, 0.3), (0.7, 4.0, 0.05)] {
            let lb = weight_at_half_lower_bound(mu, r, eps);
            let rad = eps * r / 4.0;
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = [-rad + 2.0 * rad * i as f64 / 40.0, -rad + 2.0 * rad * j as f64 / 40.0];
                    if x[0] * x[0] + x[1] * x[1] <= rad * rad {
                        assert!(weight_at_half(mu, r, &x) >= lb - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn weight_at_half_is_twice_translated_weight() {
        for &x in &[-2.0, 0.0, 0.3, 4.0] {
            let a = weight_at_half(1.1, 6.0, &[x]);
            let b = 2.0 * translated_weight(1.1, 6.0, 0.5, &[x]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn standard() -> MollifiedWeight {
        build_mollified(0.1, 1.0, 8.0, 8000).unwrap()
    }

    #[test]
    fn zeta_profile() {
        let p = MollifierParams::new(0.1, 1.0).unwrap();
        assert_eq!(p.zeta(0.5), 0.0);
        assert_eq!(p.zeta(1.0), 0.0);
        assert!((p.zeta(2.0) - 2.0 * 2f64.powf(-0.1)).abs() < 1e-15);
        for k in 0..=1000 {
            assert!(p.zeta(k as f64 * 0.004) >= 0.0);
        }
        // Continuity of ζ and ζ′ at both ends of the blend.
        for r in [p.r_lo, p.r_hi] {
            assert!((p.zeta(r - 1e-9) - p.zeta(r + 1e-9)).abs() < 1e-8);
            assert!((p.zeta_prime(r - 1e-9) - p.zeta_prime(r + 1e-9)).abs() < 1e-7);
        }
    }

    #[test]
    fn tail_closed_forms() {
        let w = standard();
        assert!((w.dphi(4.0) - 2.0 * 4f64.powf(0.9)).abs() < 1e-12);
        assert!((w.dphi(4.0) - 6.9644).abs() < 1e-4);
        assert!((w.phi(2.0) - (2.0 * 2f64.powf(1.9) - 0.1) / 1.9).abs() < 1e-12);
        assert!((w.phi(2.0) - 3.87593).abs() < 1e-5);
        // Tail integral closed form against direct quadrature of ζ/s.
        let p = *w.params();
        let numeric: f64 = (0..4000)
            .map(|k| {
                let lo = 4.0 + k as f64 * 0.05;
                gauss(lo, lo + 0.05, |s| p.zeta(s) / s)
            })
            .sum::<f64>()
            + 2.0 / p.a * 204f64.powf(-p.a);
        assert!((numeric - 2.0 / p.a * 4f64.powf(-p.a)).abs() < 1e-9);
    }

    #[test]
    fn tabulated_phi_matches_closed_form_above_r_hi() {
        let w = standard();
        for row in w.table() {
            let r = row[0];
            if r >= w.params().r_hi {
                let exact = w.params().phi_tail(r);
                assert!((row[1] - exact).abs() <= 1e-8 * exact.abs());
            }
        }
        // Continuity of the integrated branch into the closed form.
        let p = w.params().r_hi;
        assert!((w.phi(p - 1e-9) - w.params().phi_tail(p)).abs() < 1e-7);
    }

    #[test]
    fn phi_prime_vanishes_at_origin_and_is_monotone() {
        let w = standard();
        assert_eq!(w.dphi(0.0), 0.0);
        for row in w.table() {
            assert!(row[2] >= 0.0);
        }
        // φ″ = 2(1−a) r^{−a} at r_max is small relative to its value at r_hi.
        let r = w.r_max();
        let d2 = 2.0 * 0.9 * r.powf(-0.1);
        assert!(d2 < 2.0 * 0.9 * 2f64.powf(-0.1));
    }

    #[test]
    fn ode_residual_regions() {
        let w = standard();
        let tol = w.mesh_tolerance();
        for &r in &[0.2, 0.5, 0.9, 1.0] {
            assert!(w.ode_residual(r) <= tol, "r = {r}: {}", w.ode_residual(r));
        }
        for &r in &[2.0, 3.0, 5.5, 7.9] {
            assert!(w.ode_residual(r) <= 1e-6, "r = {r}");
        }
        assert!(w.ode_residual(1.5) <= 10.0 * tol);
        for row in w.table() {
            assert!(row[3] <= 10.0 * tol);
        }
    }

    #[test]
    fn coarse_mesh_is_rejected() {
        assert!(build_mollified(0.1, 1.0, 8.0, 800).is_err());
        assert!(build_mollified(0.1, 1.0, 8.0, 8000).is_ok());
        assert!(build_mollified(0.1, 1.0, 7.0, 8000).is_err());
        assert!(build_mollified(1.0, 1.0, 8.0, 8000).is_err());
    }

    /// Constant in `|φ_a(r)/r² − 1| ≤ C·a` on `[½, r_hi]`, fitted once at
    /// a ∈ {0.01, 0.05, 0.1, 0.2} (max observed ≈ 2.17, at r = ½ where the
    /// nonzero φ_a(0) dominates) and frozen with margin.
    const QUADRATIC_RATIO_CONSTANT: f64 = 2.5;

    #[test]
    fn phi_is_quadratic_up_to_order_a() {
        for &a in &[0.01, 0.05, 0.1, 0.2] {
            let w = build_mollified(a, 1.0, 8.0, 8000).unwrap();
            for k in 0..=150 {
                let r = 0.5 + 1.5 * k as f64 / 150.0;
                let dev = (w.phi(r) / (r * r) - 1.0).abs();
                assert!(dev <= QUADRATIC_RATIO_CONSTANT * a, "a={a} r={r} dev={dev}");
            }
            let c_a = w.quadratic_excess();
            assert!(c_a.is_finite());
            for row in w.table() {
                assert!(row[1] <= row[0] * row[0] + c_a + 1e-12);
            }
        }
    }

    #[test]
    fn small_a_limit_is_quadratic() {
        let radii = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
        let err = |a: f64| {
            let w = build_mollified(a, 1.0, 8.0, 8000).unwrap();
            radii.iter().map(|&r| (w.phi(r) - r * r).abs()).fold(0.0, f64::max)
        };
        let e2 = err(1e-2);
        let e3 = err(1e-3);
        assert!(e3 <= e2 / 5.0, "{e3} vs {e2}");
    }

    #[test]
    fn mollified_log_weight_gradient_matches_finite_difference() {
        let w = MollifiedLogWeight(Arc::new(standard()));
        for &x in &[0.3, 1.2, 1.7, 2.5, 5.0] {
            let mut g = [0.0];
            w.gradient(0.0, &[x], &mut g);
            let h = 1e-6;
            let fd = (w.log_weight(0.0, &[x + h]) - w.log_weight(0.0, &[x - h])) / (2.0 * h);
            assert!((g[0] - fd).abs() < 1e-5, "x={x}: {} vs {fd}", g[0]);
        }
    }

    #[test]
    fn descriptors_build_matching_weights() {
        let d = WeightDescriptor::Translated { mu: 0.9, shift: 4.0 };
        let w = d.build().unwrap();
        assert_eq!(w.descriptor(), d);
        assert_eq!(w.log_weight(0.5, &[0.0]), translated_weight(0.9, 4.0, 0.5, &[0.0]));
        let q = WeightDescriptor::Quadratic { gamma: 0.2, time_dependent: true }.build().unwrap();
        assert!((q.log_weight(1.0, &[2.0]) - 4.0 * 0.2 / 1.8).abs() < 1e-15);
    }
}
