//! Configuration, subcommands and procedural inputs for the `carvepaint` CLI.

pub mod commands;
pub mod config;
pub mod error;
pub mod plugin;
pub mod views;

pub use commands::{cmd_attend_demo, cmd_carve, cmd_inpaint, cmd_paint, cmd_pipeline, cmd_remesh, Stats, Summary};
pub use config::{Ini, PipelineConfig, Stage};
pub use error::{PipelineError, Result};
