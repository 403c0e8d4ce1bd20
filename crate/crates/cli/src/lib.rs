//! Configuration, experiment drivers and file output for the bulk-surface
//! Cahn-Hilliard solver.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod presets;
pub mod selftest;

pub use commands::{Axis, CliError, SweepTable};
pub use config::{parse_config, parse_config_str, ConfigError, MeshSpec, RunConfig};
