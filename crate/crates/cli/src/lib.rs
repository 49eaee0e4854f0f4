//! Run-directory plumbing for the `avflow` command.

pub mod artifacts;
pub mod commands;
pub mod svg;

pub use commands::{run, Cli, Command};
