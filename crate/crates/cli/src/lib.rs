//! Config-driven experiment runner on top of `plsgd`.

pub mod bundle;
pub mod config;
pub mod preset;
pub mod svg;

pub use bundle::{check, emit_report, run_experiment, CheckLine, Manifest, Outcome, Status};
pub use config::ExperimentConfig;
pub use preset::figure1_preset;
