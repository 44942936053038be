//! Experiment runner for the `spider-em` library: config files, seeded
//! algorithm × seed grids with CSV traces, first-hitting-time complexity
//! studies, per-epoch quantile summaries and invariant checks.

pub mod checks;
pub mod complexity;
pub mod config;
pub mod error;
pub mod experiment;
pub mod quantiles;
pub mod trace_csv;

pub use complexity::{estimate_complexity, ComplexityConfig, ComplexityEstimate};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_experiment_with, ExperimentOutput, Settings};
pub use quantiles::{summarize_quantiles, QuantileTable};
