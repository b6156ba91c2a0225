//! Experiment harness behind the command-line driver: configuration
//! parsing, run commands, verification suites and bound audits.

pub mod bounds_cmd;
pub mod config;
pub mod manifest;
pub mod runner;
pub mod verify;
