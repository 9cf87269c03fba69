//! Command-line front end: configuration ingestion, command dispatch,
//! artifact persistence and reproduction of the published experiments.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod repro;

pub use config::{prepare, Prepared, RunConfig};
pub use error::{CliError, CliResult};
