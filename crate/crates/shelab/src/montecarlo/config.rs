//! Experiment configuration: a TOML document with one section per concern,
//! validated on load.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coefficients::{AssumptionId, CoefficientSpec, SharedCoefficients};
use crate::error::{LabError, Result};
use crate::grid::{Field, Grid};
use crate::solver::{NoiseMode, SolverConfig};
use crate::weights::{LogWeight, WeightDescriptor};

/// Ratio between the weighted integrand at the boundary and its peak above
/// which a configuration is rejected.
pub const BOUNDARY_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub half_width: f64,
    pub points: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.half_width, self.points)
    }
}

fn default_checkpoints() -> usize {
    21
}

fn default_theta() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub steps: usize,
    /// Number of uniformly spaced checkpoints including both endpoints.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
}

impl TimeConfig {
    pub fn build(&self) -> Result<SolverConfig> {
        Ok(SolverConfig::with_uniform_checkpoints(self.steps, self.checkpoints)?
            .theta(self.theta)?
            .noise_mode(self.noise_mode))
    }
}

/// Initial datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// `amplitude · exp(−|x − c e₁|²/width²)`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
}

impl InitialData {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            InitialData::Zero => 0.0,
            InitialData::Gaussian { amplitude, width, center } => {
                let r2: f64 =
                    x.iter().enumerate().map(|(k, v)| if k == 0 { (v - center).powi(2) } else { v * v }).sum();
                amplitude * (-r2 / (width * width)).exp()
            }
        }
    }

    /// Sampled on `grid` with the boundary set to zero.
    pub fn field(&self, grid: Grid) -> Result<Field> {
        Field::from_fn_dirichlet(grid, |x| self.eval(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub paths: usize,
    pub seed: u64,
    /// Number of leading paths whose checkpoint fields are kept.
    #[serde(default)]
    pub keep_trajectories: usize,
}

/// Decay hypothesis checked before the convexity and integrated checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionConfig {
    pub which: AssumptionId,
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub waive: bool,
}

fn default_appell_times() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_step_limit() -> usize {
    100_000
}

/// Conformal-transform parameters; defaults to `(1, 1 + 4γ)` when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppellConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Checkpoints of the transformed problem (must include 0 and 1).
    #[serde(default = "default_appell_times")]
    pub times: Vec<f64>,
    /// Upper limit when searching for an aligned step count.
    #[serde(default = "default_step_limit")]
    pub step_limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatedConfig {
    /// Defaults to `0.9 γ`.
    #[serde(default)]
    pub mu: Option<f64>,
    pub shifts: Vec<f64>,
}

fn default_sweep_shifts() -> Vec<f64> {
    vec![2.0, 4.0, 8.0, 16.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    pub gamma: f64,
    pub epsilon: f64,
    /// Defaults to `0.9 γ`.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_sweep_shifts")]
    pub shifts: Vec<f64>,
}

impl UniquenessConfig {
    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(0.9 * self.gamma)
    }
}

fn default_extension() -> f64 {
    1.25
}

fn default_mesh() -> usize {
    8000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteriorConfig {
    pub a: f64,
    pub gamma: f64,
    pub epsilon: f64,
    #[serde(default = "default_extension")]
    pub extension: f64,
    #[serde(default = "default_mesh")]
    pub mesh: usize,
}

fn default_hardy_betas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 2.5]
}

fn default_hardy_deltas() -> Vec<f64> {
    vec![1.0, 1.5, 2.0, 5.0, 8.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardyConfig {
    #[serde(default = "default_hardy_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_hardy_deltas")]
    pub deltas: Vec<f64>,
}

impl Default for HardyConfig {
    fn default() -> Self {
        HardyConfig { betas: default_hardy_betas(), deltas: default_hardy_deltas() }
    }
}

fn default_threshold_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub gamma: f64,
    #[serde(default)]
    pub mus: Vec<f64>,
    /// Random draws for the property scans.
    #[serde(default = "default_threshold_samples")]
    pub samples: usize,
}

/// Tolerances; every field may be overridden in the `[tolerances]` section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Multiplies every Monte Carlo convexity tolerance.
    pub scale: f64,
    /// Relative slack of the energy inequality when `MGV = 0`.
    pub energy: f64,
    /// Allowed relative change of calibrated constants under refinement.
    pub refinement: f64,
    /// Relative discrepancy of the two sides of the norm identity.
    pub identity: f64,
    /// Combined standard errors allowed in the dual-route comparison.
    pub dual_sigma: f64,
    /// Relative discretization floor in the dual-route comparison.
    pub dual_floor: f64,
    /// Relative slack of the local-mass bound.
    pub uniqueness: f64,
    /// Floor for the per-path integrand positivity.
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            scale: 1.0,
            energy: 1e-3,
            refinement: 0.2,
            identity: 0.02,
            dual_sigma: 4.0,
            dual_floor: 1e-3,
            uniqueness: 0.0,
            positivity: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub scenario: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub coefficients: CoefficientSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub weights: Vec<WeightDescriptor>,
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub assumptions: Option<AssumptionConfig>,
    #[serde(default)]
    pub appell: Option<AppellConfig>,
    #[serde(default)]
    pub translated: Option<TranslatedConfig>,
    #[serde(default)]
    pub uniqueness: Option<UniquenessConfig>,
    #[serde(default)]
    pub interior: Option<InteriorConfig>,
    #[serde(default)]
    pub hardy: Option<HardyConfig>,
    #[serde(default)]
    pub thresholds: Option<ThresholdConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl EnsembleConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<EnsembleConfig> {
        let cfg: EnsembleConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EnsembleConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        EnsembleConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Structural checks plus the boundary-decay check of every weight
    /// against the initial datum.
    pub fn validate(&self) -> Result<()> {
        if self.ensemble.paths == 0 {
            return Err(LabError::Config("ensemble.paths must be at least 1".into()));
        }
        if self.ensemble.keep_trajectories > self.ensemble.paths {
            return Err(LabError::Config("keep_trajectories exceeds the path count".into()));
        }
        let grid = self.grid.build()?;
        self.time.build()?;
        let scale = self.tolerances.scale;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(LabError::Config(format!("tolerance scale {scale} must be positive")));
        }
        if let InitialData::Gaussian { width, .. } = self.initial {
            if !(width > 0.0) {
                return Err(LabError::Config("initial width must be positive".into()));
            }
        }
        for w in &self.weights {
            let built = w.build().map_err(|e| LabError::Config(format!("weight {w:?}: {e}")))?;
            let ratio = boundary_ratio(&grid, |x| built.log_weight(0.0, x), |x| self.initial.eval(x));
            if ratio > BOUNDARY_RATIO {
                return Err(LabError::Config(format!(
                    "weighted initial integrand at the boundary is {ratio:e} of its peak for {w:?}; enlarge the box"
                )));
            }
        }
        if let Some(a) = &self.appell {
            crate::appell::AppellParams::new(a.alpha, a.beta).map_err(|e| LabError::Config(e.to_string()))?;
            if a.times.first() != Some(&0.0) || a.times.last() != Some(&1.0) {
                return Err(LabError::Config("appell.times must start at 0 and end at 1".into()));
            }
        }
        if let Some(u) = &self.uniqueness {
            if u.shifts.is_empty() || u.shifts.iter().any(|r| !(*r > 0.0)) {
                return Err(LabError::Config("uniqueness.shifts must be positive".into()));
            }
        }
        if let Some(t) = &self.translated {
            if t.shifts.iter().any(|r| !(*r >= 0.0)) {
                return Err(LabError::Config("translated.shifts must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid.build()
    }

    pub fn solver(&self) -> Result<SolverConfig> {
        self.time.build()
    }

    pub fn coefficients(&self) -> SharedCoefficients {
        Arc::new(self.coefficients.clone())
    }

    pub fn initial_field(&self) -> Result<Field> {
        self.initial.field(self.grid()?)
    }

    /// Level `γ` of the first quadratic weight.
    pub fn primary_gamma(&self) -> Result<f64> {
        self.weights
            .iter()
            .find_map(|w| match w {
                WeightDescriptor::Quadratic { gamma, .. } => Some(*gamma),
                _ => None,
            })
            .ok_or_else(|| LabError::Config("this check needs a quadratic weight in [[weights]]".into()))
    }

    pub fn built_weights(&self) -> Result<Vec<Arc<dyn LogWeight>>> {
        if self.weights.is_empty() {
            return Ok(vec![WeightDescriptor::Quadratic { gamma: 0.0, time_dependent: false }.build()?]);
        }
        self.weights.iter().map(|w| w.build()).collect()
    }

    /// SHA-256 of the canonical JSON form (object keys sorted), so the hash
    /// does not depend on the order of fields in the source document.
    pub fn hash(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(sha256_hex(canonical_json(&value).as_bytes()))
    }
}

/// Compact JSON with recursively sorted object keys.
pub fn canonical_json(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", serde_json::Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        serde_json::Value::Array(items) => {
            format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(","))
        }
        other => other.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Largest ratio `e^{2w}u²(boundary) / max e^{2w}u²` over boundary nodes,
/// evaluated with the analytic datum (the sampled field is zero there).
pub fn boundary_ratio(grid: &Grid, log_w: impl Fn(&[f64]) -> f64, u: impl Fn(&[f64]) -> f64) -> f64 {
    let dim = grid.dim();
    let mut peak = f64::NEG_INFINITY;
    let mut edge = f64::NEG_INFINITY;
    for (i, p) in grid.nodes() {
        let x = &p[..dim];
        let v = u(x).abs();
        if v == 0.0 {
            continue;
        }
        let l = 2.0 * log_w(x) + 2.0 * v.ln();
        peak = peak.max(l);
        if grid.is_boundary(i) {
            edge = edge.max(l);
        }
    }
    if edge == f64::NEG_INFINITY {
        0.0
    } else {
        (edge - peak).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
scenario = "t"
[grid]
dim = 1
half_width = 8.0
points = 129
[time]
steps = 100
[coefficients]
potential = { kind = "zero" }
noise = { kind = "zero" }
[initial]
kind = "gaussian"
amplitude = 1.0
width = 1.0
[[weights]]
family = "quadratic"
gamma = 0.1
time_dependent = false
[ensemble]
paths = 1
seed = 7
"#;

    #[test]
    fn minimal_config_loads_with_defaults() {
        let c = EnsembleConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.time.checkpoints, 21);
        assert_eq!(c.time.theta, 0.5);
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.primary_gamma().unwrap(), 0.1);
        let again = EnsembleConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn validation_rejects_bad_documents() {
        assert!(EnsembleConfig::from_toml_str(&MINIMAL.replace("paths = 1", "paths = 0")).is_err());
        assert!(EnsembleConfig::from_toml_str(&MINIMAL.replace("steps = 100", "steps = 101")).is_err());
        assert!(EnsembleConfig::from_toml_str(&MINIMAL.replace("seed = 7", "seed = 7\nunknown = 1")).is_err());
        // A weight too strong for the box fails the boundary check.
        let strong = MINIMAL.replace("gamma = 0.1", "gamma = 0.9");
        assert!(matches!(EnsembleConfig::from_toml_str(&strong), Err(LabError::Config(_))));
    }

    #[test]
    fn hash_ignores_field_order() {
        let a = EnsembleConfig::from_toml_str(MINIMAL).unwrap();
        let reordered = MINIMAL.replace("amplitude = 1.0\nwidth = 1.0", "width = 1.0\namplitude = 1.0");
        let b = EnsembleConfig::from_toml_str(&reordered).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        let c = EnsembleConfig::from_toml_str(&MINIMAL.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":{"d":[1,2],"c":null}}"#).unwrap();
        assert_eq!(canonical_json(&v), r#"{"a":{"c":null,"d":[1,2]},"b":1}"#);
    }
}
