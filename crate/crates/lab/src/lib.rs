//! File-backed side of the distillation lab: artifact formats, experiment
//! configuration, latency benchmarks and the pipeline behind the CLI.

pub mod bench;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};
pub use pipeline::Pipeline;
