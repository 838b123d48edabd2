//! Library surface of the `borrowlab` CLI: file ingestion, run
//! configuration, and command execution, kept separate from the binary for
//! testability.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
