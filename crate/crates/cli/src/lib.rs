//! File formats, experiment configuration, ensemble generation and the
//! end-to-end pipeline.

pub mod config;
pub mod error;
pub mod generate;
pub mod io;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
