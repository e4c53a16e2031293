//! Configuration, Matrix Market input, CSV output and batch drivers for the `ssr` binary.

pub mod config;
pub mod mtx;
pub mod output;
pub mod run;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use run::{load, run_command, Overrides, RunError, RunReport};
