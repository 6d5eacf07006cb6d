//! Simulation and statistics for quantum-Zeno-like interaction-free
//! measurements (IFM) of semitransparent samples.
//!
//! A probe particle starts in the reference state `|R>` and is coherently
//! coupled into the sample state `|S>` over `N` round trips. Each round trip
//! the `|S>` amplitude meets the sample, which transmits it with amplitude
//! `sqrt(alpha)` (times a phase) and moves the rest into the loss channel.
//!
//! * [`sim`]: state evolution, loss-peak and optimal-`N` searches.
//! * [`stats`]: special functions, confidence intervals, seeded samplers.
//! * [`discrimination`]: sequential Bayesian discrimination of two
//!   transparencies by Monte Carlo, and the minimum-loss bound.
//! * [`precision`]: expected particle loss when estimating an unknown
//!   transparency to a given uncertainty.

pub mod discrimination;
mod error;
pub mod precision;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
