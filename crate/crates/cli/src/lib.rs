//! Experiment runner for the `qwalk` simulator: configuration, presets,
//! fits of stored series and self-describing result files.

pub mod app;
pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ConfigLayer, ExperimentConfig, ModelKind, OutputFormat};
pub use output::{Bundle, Records, ResultFile};
