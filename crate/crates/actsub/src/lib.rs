//! Measurement-constrained estimation of individualized linear
//! thresholds.
//!
//! The library estimates a sparse parameter `theta` of a linear
//! threshold `theta' Z` for a continuous measurement `X` against a
//! binary outcome `Y`, when covariates are free but labels cost budget.
//! It combines a kernel-smoothed surrogate of the 0-1 loss
//! ([`kernels`]), an l1-regularized path-following solver ([`solver`]),
//! and iterative active subsampling that concentrates the label budget
//! near the current threshold estimate ([`sampling`], [`pipeline`]).
//! Simulation models, a replicated benchmark harness, and CSV/config
//! interfaces round out the crate ([`datagen`], [`bench`], [`dataset`],
//! [`config`]).

pub mod bench;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod kernels;
pub mod model_selection;
pub mod pipeline;
pub mod quad;
pub mod risk;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
