//! Run manifests: every run writes `manifest.json` next to its outputs,
//! recording the effective configuration, seeds, parameters and a SHA-256
//! digest of each output so that a run can be replayed and compared.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checks::{sweep_csv, verify, CheckDetails, CheckId, CheckReport};
use super::config::{sha256_hex, EnsembleConfig, Tolerances};
use super::ensemble::{run_ensemble, streams, trajectory_csv};
use crate::appell::INTERPOLATION;
use crate::error::{LabError, Result};
use crate::functionals::Verdict;
use crate::solver::{NoiseMode, CG_TOLERANCE};
use crate::stochastic::SeedLadder;
use crate::thresholds::uniqueness_exponent;
use crate::weights::MOLLIFIER_BLEND;

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a run was asked to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Simulate { dump_fields: bool },
    Verify { check: CheckId },
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub paths: usize,
    pub derivation: String,
    /// Child stream labels, as `(purpose, label)`.
    pub streams: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub theta: f64,
    pub noise_mode: NoiseMode,
    pub cg_tolerance: f64,
    pub mollifier_blend: String,
    pub interpolation: String,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub config_hash: String,
    pub code_version: String,
    pub invocation: Invocation,
    pub config: EnsembleConfig,
    pub seeds: SeedRecord,
    pub parameters: Parameters,
    pub outputs: Vec<OutputDigest>,
    /// `None` for plain simulations, which carry no verdict.
    pub verdict: Option<Verdict>,
    pub summary: Vec<String>,
    /// Not covered by any digest.
    pub wall_clock_seconds: f64,
}

impl ExperimentManifest {
    pub fn digest_of(&self, file: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.file == file).map(|o| o.sha256.as_str())
    }
}

fn seed_record(config: &EnsembleConfig) -> SeedRecord {
    SeedRecord {
        master: config.ensemble.seed,
        paths: config.ensemble.paths,
        derivation: SeedLadder::DERIVATION.to_string(),
        streams: vec![
            ("bridge".into(), streams::BRIDGE),
            ("dual-direct".into(), streams::DUAL_DIRECT),
            ("transformed".into(), streams::TRANSFORMED),
            ("scans".into(), streams::SCANS),
        ],
    }
}

/// `R,exponent,slope` rows of the uniqueness exponent for `R = 1..=32`.
pub fn exponent_table(alpha: f64, m0_tilde_sq: f64, mu: f64, eps: f64) -> String {
    let mut out = String::from("R,exponent,slope\n");
    for r in 1..=32 {
        let r = r as f64;
        let e = uniqueness_exponent(alpha, m0_tilde_sq, mu, eps, r);
        out.push_str(&format!("{r},{e},{}\n", e / (r * r)));
    }
    out
}

/// Writes `contents` into `dir/name` and returns its digest.
fn write_output(dir: &Path, name: &str, contents: &str) -> Result<OutputDigest> {
    fs::write(dir.join(name), contents)?;
    Ok(OutputDigest { file: name.to_string(), sha256: sha256_hex(contents.as_bytes()) })
}

fn write_report(dir: &Path, report: &CheckReport, outputs: &mut Vec<OutputDigest>) -> Result<()> {
    outputs.push(write_output(dir, "report.json", &serde_json::to_string_pretty(report)?)?);
    for (name, csv) in report.csv_outputs() {
        outputs.push(write_output(dir, &name, &csv)?);
    }
    Ok(())
}

/// Runs `invocation` on `config`, writing its outputs and `manifest.json`
/// into `out_dir` (created if missing).
pub fn execute(config: &EnsembleConfig, invocation: Invocation, out_dir: &Path) -> Result<ExperimentManifest> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::new();
    let (verdict, summary) = match invocation {
        Invocation::Simulate { dump_fields } => {
            let mut cfg = config.clone();
            if dump_fields && cfg.ensemble.keep_trajectories == 0 {
                cfg.ensemble.keep_trajectories = 1;
            }
            let run = run_ensemble(&cfg)?;
            outputs.push(write_output(out_dir, "stats.json", &serde_json::to_string_pretty(&run.stats)?)?);
            for k in 0..run.stats.weights.len() {
                outputs.push(write_output(out_dir, &format!("stats_{k}.csv"), &run.stats.to_csv(k))?);
            }
            if dump_fields {
                for (i, traj) in run.trajectories.iter().enumerate() {
                    outputs.push(write_output(out_dir, &format!("fields_{i}.csv"), &trajectory_csv(traj))?);
                }
            }
            let line = format!(
                "simulated {} paths, {} weights, {} checkpoints",
                run.stats.paths,
                run.stats.weights.len(),
                run.stats.times.len()
            );
            (None, vec![line])
        }
        Invocation::Verify { check } => {
            let report = verify(config, check)?;
            write_report(out_dir, &report, &mut outputs)?;
            (Some(report.verdict), vec![report.line()])
        }
        Invocation::Sweep => {
            let report = verify(config, CheckId::UniquenessSweep)?;
            write_report(out_dir, &report, &mut outputs)?;
            if let CheckDetails::UniquenessSweep(s) = &report.details {
                let uc = config.uniqueness.as_ref().expect("sweep ran, so the section exists");
                let table = exponent_table(s.alpha, s.m0_tilde * s.m0_tilde, uc.mu(), uc.epsilon);
                outputs.push(write_output(out_dir, "exponents.csv", &table)?);
                debug_assert!(!sweep_csv(&s.report).is_empty());
            }
            (Some(report.verdict), vec![report.line()])
        }
    };
    let manifest = ExperimentManifest {
        config_hash: config.hash()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        invocation,
        config: config.clone(),
        seeds: seed_record(config),
        parameters: Parameters {
            theta: config.time.theta,
            noise_mode: config.time.noise_mode,
            cg_tolerance: CG_TOLERANCE,
            mollifier_blend: MOLLIFIER_BLEND.to_string(),
            interpolation: INTERPOLATION.to_string(),
            tolerances: config.tolerances,
        },
        outputs,
        verdict,
        summary,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// [`execute`] inside a dedicated rayon pool of `threads` workers.
pub fn execute_with_threads(
    config: &EnsembleConfig,
    invocation: Invocation,
    out_dir: &Path,
    threads: usize,
) -> Result<ExperimentManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("cannot build a {threads}-thread pool: {e}")))?;
    pool.install(|| execute(config, invocation, out_dir))
}

/// Reads `manifest.json` from a run directory (or the file itself).
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    Ok(serde_json::from_str(&fs::read_to_string(file)?)?)
}

/// Per-file digest comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestMatch {
    pub file: String,
    pub expected: String,
    /// `None` when the file is missing.
    pub actual: Option<String>,
}

impl DigestMatch {
    pub fn matches(&self) -> bool {
        self.actual.as_deref() == Some(self.expected.as_str())
    }
}

/// Re-hashes the outputs listed in `manifest` as found in `dir`.
pub fn check_outputs(manifest: &ExperimentManifest, dir: &Path) -> Vec<DigestMatch> {
    manifest
        .outputs
        .iter()
        .map(|o| DigestMatch {
            file: o.file.clone(),
            expected: o.sha256.clone(),
            actual: fs::read(dir.join(&o.file)).ok().map(|b| sha256_hex(&b)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub replay_dir: PathBuf,
    pub config_hash_matches: bool,
    pub files: Vec<DigestMatch>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.config_hash_matches && self.files.iter().all(DigestMatch::matches)
    }
}

/// Reruns the recorded invocation into `replay_dir` and compares every
/// output digest with the recorded one.
pub fn replay(manifest: &ExperimentManifest, replay_dir: &Path) -> Result<ReplayReport> {
    let rerun = execute(&manifest.config, manifest.invocation, replay_dir)?;
    Ok(ReplayReport {
        replay_dir: replay_dir.to_path_buf(),
        config_hash_matches: rerun.config_hash == manifest.config_hash,
        files: check_outputs(manifest, replay_dir),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        scenario = "small"
        [grid]
        dim = 1
        half_width = 4.0
        points = 81
        [time]
        steps = 40
        checkpoints = 5
        [coefficients]
        potential = { kind = "zero" }
        noise = { kind = "constant", value = 0.3 }
        [initial]
        kind = "gaussian"
        amplitude = 1.0
        width = 0.5
        [[weights]]
        family = "quadratic"
        gamma = 0.2
        time_dependent = false
        [ensemble]
        paths = 8
        seed = 11
    "#;

    #[test]
    fn simulate_writes_digested_outputs_and_replays() {
        let cfg = EnsembleConfig::from_toml_str(SMALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = execute(&cfg, Invocation::Simulate { dump_fields: true }, dir.path()).unwrap();
        let files: Vec<&str> = m.outputs.iter().map(|o| o.file.as_str()).collect();
        assert_eq!(files, ["stats.json", "stats_0.csv", "fields_0.csv"]);
        assert!(check_outputs(&m, dir.path()).iter().all(DigestMatch::matches));
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(loaded, m);
        let again = tempfile::tempdir().unwrap();
        assert!(replay(&loaded, again.path()).unwrap().matches());
    }

    #[test]
    fn tampering_is_detected() {
        let cfg = EnsembleConfig::from_toml_str(SMALL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = execute(&cfg, Invocation::Simulate { dump_fields: false }, dir.path()).unwrap();
        fs::write(dir.path().join("stats_0.csv"), "t\n").unwrap();
        let checks = check_outputs(&m, dir.path());
        assert!(!checks.iter().find(|c| c.file == "stats_0.csv").unwrap().matches());
        assert!(checks.iter().find(|c| c.file == "stats.json").unwrap().matches());
    }

    #[test]
    fn digests_do_not_depend_on_thread_count() {
        let cfg = EnsembleConfig::from_toml_str(SMALL).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let inv = Invocation::Simulate { dump_fields: false };
        let one = execute_with_threads(&cfg, inv, a.path(), 1).unwrap();
        let four = execute_with_threads(&cfg, inv, b.path(), 4).unwrap();
        assert_eq!(one.outputs, four.outputs);
    }

    #[test]
    fn exponent_table_has_quadratic_rows() {
        let t = exponent_table(9.0, 0.05, 0.9, 0.25);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 33);
        let cols: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
        assert!((cols[1] - 4.0 * cols[2]).abs() < 1e-12);
    }
}
