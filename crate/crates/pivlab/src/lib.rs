//! pivlab: a simulation-and-verification lab for portfolio viability
//! under partial information.
//!
//! The lab simulates single-asset jump-diffusion markets, solves the
//! adjoint backward equation for locally optimal portfolios by regression
//! Monte Carlo, builds marginal-utility and Girsanov densities, audits
//! them for the partial-information equivalent-martingale-measure
//! property, pastes per-layer densities into local martingale deflators,
//! and certifies everything statistically against CLT intervals with a
//! family-wise z threshold.
//!
//! Everything is deterministic given a seed: draws come from
//! counter-based streams keyed by `(seed, path, step, purpose)`, and all
//! cross-path reductions run in fixed path order, so results are
//! bit-identical regardless of worker count.

pub mod audit;
pub mod bsde;
pub mod condexp;
pub mod deflator;
pub mod error;
pub mod expr;
pub mod grid;
pub mod io;
pub mod measure;
pub mod model;
pub mod rng;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use grid::{Grid2, TimeGrid};
