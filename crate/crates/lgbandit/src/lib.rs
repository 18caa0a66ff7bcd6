//! Experiment harness for restless bandits over linear Gaussian systems:
//! configuration, regret sweeps, diagnostics, the verification suite and
//! the file formats they produce.

pub mod cli;
pub mod config;
pub mod io;
pub mod suite;
pub mod sweep;
