//! Experiment layer: TOML configurations, parallel path ensembles, the named
//! verification checks and reproducible run manifests.

pub mod checks;
pub mod config;
pub mod ensemble;
pub mod manifest;

pub use checks::{verify, CheckDetails, CheckId, CheckReport};
pub use config::EnsembleConfig;
pub use ensemble::{run_ensemble, EnsembleRun, EnsembleStats};
pub use manifest::{
    check_outputs, execute, execute_with_threads, load_manifest, replay, ExperimentManifest, Invocation, ReplayReport,
};
