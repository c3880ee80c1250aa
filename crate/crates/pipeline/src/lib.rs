//! Batch pipeline over the workspace crates. Each stage reads the artifacts
//! of earlier stages from the output directory and writes its own under
//! fixed names (see [`artifacts`]).

pub mod config;
mod error;
pub mod logging;
pub mod stages;

pub use config::PipelineConfig;
pub use error::PipelineError;
pub use stages::{artifacts, run_stage, Context, Stage};
