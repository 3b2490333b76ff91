//! Command-line layer over the `xbnet` library: run specs, model
//! artifacts, reports and the benchmark harness.

pub mod artifact;
pub mod benchmark;
pub mod commands;
pub mod error;
pub mod report;
pub mod run;

pub use artifact::ModelArtifact;
pub use error::{CliError, Result};
pub use run::{ModelKind, RunSpec};
