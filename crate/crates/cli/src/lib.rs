//! Experiment harness for the fastercache sampler: runs strategies against
//! full inference, writes JSON and CSV reports, and renders SVG charts.

pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod harness;
pub mod plot;
pub mod report;

pub use config::{AnalyticParams, ExperimentConfig, ModelConfig};
pub use error::{CliError, Result};
pub use harness::{ablate, run, sweep, Experiment};
pub use report::{AblationReport, AnyReport, RunReport, SweepReport};
