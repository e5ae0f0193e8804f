//! Command-line front end for `loopsoup-core`: TOML run configurations,
//! the experiment registry, and JSON/CSV report output.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_str, ArcSpec, ConfigError, OutputConfig, RunConfig};
pub use run::{calibrate_for, calibration, execute, exit_code, run, RunError, RunOutcome, REPORT_DIR_ENV};
