//! `shelab`: run ensembles, verification checks and uniqueness sweeps from a
//! TOML configuration, and inspect or replay finished runs.
//!
//! Exit codes: 0 all checks pass, 1 some check fails, 2 inconclusive with no
//! failure, 3 configuration or runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use shelab::functionals::Verdict;
use shelab::montecarlo::manifest::{check_outputs, load_manifest, replay, ExperimentManifest, Invocation};
use shelab::montecarlo::{execute, CheckId, EnsembleConfig};

#[derive(Parser)]
#[command(name = "shelab", version, about = "Stochastic heat equation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured ensemble and write per-checkpoint statistics.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the checkpoint fields of the retained paths.
        #[arg(long)]
        dump_fields: bool,
    },
    /// Run one named check.
    Verify {
        /// One of: energy, convexity, convexity-translated, appell-identity,
        /// appell-dual, integrated, interior, thresholds, hardy, uniqueness-sweep.
        check: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Uniqueness R-sweep plus the exponent table.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a run's manifest summary and verify its output digests
    /// (exit 1 on any mismatch).
    Report {
        /// Run directory (or its manifest.json).
        dir: PathBuf,
        /// Rerun the recorded invocation into DIR/replay and compare digests.
        #[arg(long)]
        replay: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "shelab-out")]
    out: PathBuf,
    /// Multiply every Monte Carlo tolerance.
    #[arg(long)]
    tolerance_scale: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<EnsembleConfig> {
        let mut cfg =
            EnsembleConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(p) = self.paths {
            cfg.ensemble.paths = p;
            cfg.ensemble.keep_trajectories = cfg.ensemble.keep_trajectories.min(p);
        }
        if let Some(s) = self.seed {
            cfg.ensemble.seed = s;
        }
        if let Some(x) = self.tolerance_scale {
            cfg.tolerances.scale = x;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(verdict: Option<Verdict>) -> u8 {
    match verdict {
        None | Some(Verdict::Pass) => 0,
        Some(Verdict::Fail) => 1,
        Some(Verdict::Inconclusive) => 2,
    }
}

fn print_manifest(m: &ExperimentManifest, dir: &Path) {
    for line in &m.summary {
        println!("{line}");
    }
    println!(
        "scenario {}, seed {}, {} paths, config {}, version {}, {:.2}s",
        m.config.scenario,
        m.seeds.master,
        m.seeds.paths,
        &m.config_hash[..12],
        m.code_version,
        m.wall_clock_seconds
    );
    println!("outputs in {}", dir.display());
}

fn run(cli: Cli) -> Result<u8> {
    let (run, invocation) = match cli.command {
        Command::Simulate { run, dump_fields } => (run, Invocation::Simulate { dump_fields }),
        Command::Verify { check, run } => {
            let check: CheckId = check.parse()?;
            (run, Invocation::Verify { check })
        }
        Command::Sweep { run } => (run, Invocation::Sweep),
        Command::Report { dir, replay: rerun } => return report(&dir, rerun),
    };
    let cfg = run.load()?;
    let manifest = execute(&cfg, invocation, &run.out)?;
    print_manifest(&manifest, &run.out);
    Ok(exit_code(manifest.verdict))
}

fn report(path: &Path, rerun: bool) -> Result<u8> {
    let manifest = load_manifest(path).with_context(|| format!("reading manifest from {}", path.display()))?;
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    print_manifest(&manifest, &dir);
    let mut ok = true;
    for d in check_outputs(&manifest, &dir) {
        let status = if d.matches() { "ok" } else { "MISMATCH" };
        ok &= d.matches();
        println!("  {status:<8} {}", d.file);
    }
    if rerun {
        let replay_dir = dir.join("replay");
        let r = replay(&manifest, &replay_dir)?;
        println!("replay into {}: {}", replay_dir.display(), if r.matches() { "bit-identical" } else { "DIFFERS" });
        for d in r.files.iter().filter(|d| !d.matches()) {
            println!("  differs  {}", d.file);
        }
        ok &= r.matches();
    }
    if !ok {
        eprintln!("output digests do not match the manifest");
        return Ok(1);
    }
    Ok(exit_code(manifest.verdict))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
