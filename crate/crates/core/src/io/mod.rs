//! Configuration files, run directories and output formats.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, read_config, ConfigFormat, LoadedConfig, RunConfig};
pub use output::{default_output_root, OUTPUT_ROOT_ENV};
pub use runner::{execute_ch_only, execute_run, RunSummary};
