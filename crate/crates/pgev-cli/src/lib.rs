//! Library surface of the `pgev` command-line pipeline: configuration
//! and the stage implementations, exposed so integration tests can share
//! the artifact-name constants and config type with the binary.

pub mod config;
pub mod stages;
