//! Library behind the `pasb` command: model files, feature pipelines,
//! synthetic data, benchmarks and reports.

pub mod benchmark;
pub mod commands;
pub mod error;
pub mod model_file;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod train;

pub use error::CliError;
