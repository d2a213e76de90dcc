//! Orchestration, benchmarking and acceptance checks for the racx toolchain.

pub mod acceptance;
pub mod bench;
pub mod commands;
pub mod pipeline;
pub mod summary;
