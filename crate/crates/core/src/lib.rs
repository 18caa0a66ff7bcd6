//! Restless multi-armed bandits whose rewards are read out of a linear
//! Gaussian dynamical system.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery: dense small-matrix kernels, the environment simulator, the
//! Kalman and fixed-gain ("modified") filters, the UBSS learner, comparison
//! policies, episode execution, and the probabilistic bound checks. File
//! formats, configuration and the command line live in the `lgbandit` crate.
//!
//! Action indices are zero-based throughout.

#![no_std]

extern crate alloc;

pub mod baseline;
pub mod env;
pub mod episode;
mod error;
pub mod filter;
pub mod linalg;
mod math;
pub mod matrix;
pub mod seed;
pub mod stats;
pub mod ubss;
pub mod verify;

pub use error::{Error, Result};
pub use matrix::{Matrix, Vector};
