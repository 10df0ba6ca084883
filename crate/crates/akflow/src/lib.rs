//! IO companion to `akflow-core`: run configuration, report formats, and
//! the identity/flow runners behind the `akflow` command-line tool.

pub mod config;
pub mod report;
pub mod runner;
