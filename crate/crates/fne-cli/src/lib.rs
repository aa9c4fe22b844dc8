//! Standard-library companion to `fne-core`: file formats, configuration,
//! run orchestration, and reporting. The `fne` binary is a thin shell over
//! this crate so integration and acceptance tests can drive the exact same
//! code paths in-process.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fned;
pub mod report;
pub mod runner;

pub use error::{CliError, FormatError, Result};
