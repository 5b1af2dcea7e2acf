//! IO, configuration, backends, caching, and the CLI around `tcmap-core`:
//! the std half of the task-level transaction-cost mapping pipeline.

pub mod backend;
pub mod cache;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod pack;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
pub use stages::{run_stage, Stage, StageReport};
