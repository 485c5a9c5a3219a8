//! Experiment configs, Monte Carlo runners, the fast validation suite and
//! report output.

pub mod config;
pub mod experiments;
pub mod report;
pub mod validate;

pub use config::{EnsembleChoice, ExperimentConfig, ExperimentKind, Overrides, TestFunctionSpec};
pub use experiments::run_experiment;
pub use report::{read_report, write_outputs, write_report, Comparison, Metric, Report, ReportFormat, Table};
pub use validate::run_validate;
