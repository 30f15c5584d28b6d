//! Experiment harness for `cirlt-core`: JSON configuration, CSV outputs,
//! run manifests with content digests, and the exact-transition KS test.

pub mod config;
pub mod error;
pub mod io;
pub mod ks;
pub mod manifest;
pub mod run;

pub use config::{ExperimentConfig, Tag};
pub use error::HarnessError;
pub use manifest::RunManifest;
pub use run::run_experiment;
