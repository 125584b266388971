//! Experiment configs, scenario runners, reports and the command line.

pub mod cli;
pub mod config;
pub mod report;
pub mod scenarios;
pub mod validation;

pub use config::{Criterion, ExperimentConfig, ExperimentKind, ModelSpec, Parameters, Point, PriorSpec};
pub use report::{DiagnosticSummary, InvariantCheck, Report, ReportRow};
pub use scenarios::{run, validate};
