//! Subcommands of the `padkit` binary, callable in-process.

pub mod commands;
pub mod config;
