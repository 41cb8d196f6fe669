//! Command-line driver: configuration loading, subcommand orchestration
//! and report aggregation on top of the core library.

pub mod config;
pub mod pipeline;
pub mod report;
