//! Sequential delay-Doppler estimation for sub-Nyquist pulse-Doppler radar.
//!
//! Compressed pulses are modelled as `S = M Psi Theta + N`. Delays are found
//! first with beamspace MUSIC on the compressed data; the per-delay
//! coefficient sequences are then extracted and their Dopplers estimated with
//! ESPRIT; reflectivities follow by least squares.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aic;
pub mod delay_est;
pub mod doppler_est;
pub mod error;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
pub use matrix::{c64, CMat, C64};
