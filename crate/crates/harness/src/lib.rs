//! Configuration, Monte-Carlo sweeps and artifact emission for the GeSeDD
//! estimator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emit;
pub mod error;
pub mod metrics;
pub mod run_once;
pub mod scenes;
pub mod stats;
pub mod sweeps;
pub mod trial;

pub use error::{HarnessError, Result};
