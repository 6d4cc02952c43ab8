//! File formats, caching and orchestration for the sfatnet detector.
//!
//! The algorithms live in `sfatnet-core`; this crate reads and writes WAV
//! files, manifests, configs, checkpoints and score files, keeps the
//! annotation cache and drives each command line step.

pub mod audio;
pub mod cache;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod scores;

pub use error::{Error, ExitStatus, Result};
