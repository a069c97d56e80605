//! Experiment orchestration for implicit-model design: configuration,
//! design selection, posterior replicates, result files and plot exports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;

pub use config::{EstimatorKind, ExperimentConfig, Method, ModelKind};
pub use error::{CliError, CliResult};
pub use experiments::{
    equidistant_comparison, export_plot_data, random_baseline, run_experiment, run_experiment_artifacts,
    BaselineReport, EquidistantComparison, RunReport, RunSummary,
};
pub use output::Manifest;
