//! Command-line workflows over the `focalsweep` library: configuration,
//! scene files, planning, rendering and the simulated experiments.

pub mod commands;
pub mod config;
pub mod error;
mod plot;

pub use config::ProjectConfig;
pub use error::{CliError, Result};
