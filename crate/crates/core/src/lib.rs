//! Numerical core for studying how training hyperparameters causally affect
//! a classifier's predictions and saliency explanations.
//!
//! Everything here is `no_std` + `alloc` and a pure function of its explicit
//! arguments, seeds included.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod causal;
pub mod data;
pub mod error;
pub mod explain;
pub mod hparams;
pub mod nn;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
