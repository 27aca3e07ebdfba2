//! Scenario configuration, sweep execution, CSV output and validation
//! campaigns for the `mmrelay` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod sweep;
pub mod validate;

pub use config::{load_config, parse_config, Engine, Metric, ScenarioConfig, Variable};
pub use error::{CliError, Result};
pub use output::{format_number, to_csv, CSV_HEADER};
pub use sweep::{run_sweep, Row, SweepResult};
pub use validate::{run_validation, ValidationReport};
