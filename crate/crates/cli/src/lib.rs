//! File formats, run configuration and subcommands for the `orthate` binary.

pub mod commands;
pub mod config;
pub mod dataio;
pub mod report;
