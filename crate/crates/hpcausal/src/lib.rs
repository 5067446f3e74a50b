//! Model-zoo pipeline: build a seeded zoo, explain it, estimate kernelized
//! hyperparameter effects and analyze them. File formats, configuration and
//! the command-line front end live here; the numerics are in `hpcausal_core`.

pub mod config;
pub mod error;
pub mod explanations;
pub mod format;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod zoo;

pub use error::{Error, Result};
