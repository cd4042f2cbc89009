//! Files, reports and the command-line pipeline around [`vsensor_core`].
//!
//! - [`io`]: model JSON, dataset CSV, certificate and attack JSON lines
//! - [`report`]: markdown and CSV tables plus plot data
//! - [`config`]: the TOML run configuration
//! - [`pipeline`]: the steps behind each CLI command and the full comparison

pub mod config;
mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, ModelRun, PipelineOutput};
pub use vsensor_core;
