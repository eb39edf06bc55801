//! Library surface of the pipeline CLI, kept separate from the binary so
//! integration tests can drive the commands directly.

pub mod commands;
pub mod config;

pub use commands::{
    run_compare, run_features, run_fit, run_rolling, run_segments, run_simulate, run_wcc,
    CliError, CliResult,
};
pub use config::RunConfig;
