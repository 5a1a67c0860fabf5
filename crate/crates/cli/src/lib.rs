//! Command-line front-end for the trajectory-surrogate pipeline.
//!
//! Each subcommand of the `trajnet` binary is a function in [`commands`] that
//! takes a [`RunConfig`], so the whole pipeline can also be driven from Rust
//! (with a custom [`Registry`] of systems).

pub mod commands;
pub mod config;
pub mod error;
pub mod registry;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
pub use registry::Registry;
