//! Group disparity measured through an emulated target trial.
//!
//! The crate is `no_std` (with `alloc`). It covers the analysis path from a
//! long-format person-time table to a disparity estimate:
//!
//! - [`data_model`]: records, tables, trial specifications, table validation.
//! - [`emulation`]: eligibility flags, one-trial-per-time-unit selection,
//!   standard-population membership.
//! - [`numerics`]: restricted cubic splines and IRLS for logistic and linear
//!   models.
//! - [`estimators`]: weighting and iterated conditional expectation
//!   estimators of τ(r) under Propositions I–IV.
//! - [`sampling_design`]: two-stage sampling fractions and Bernoulli
//!   thinning.
//! - [`oracle_sim`]: a structural-equation simulator with potential
//!   outcomes, the stochastic eligibility intervention, ground-truth τ and a
//!   counting evaluator of the identifying formulas.
//! - [`inference`]: the cluster bootstrap.
//!
//! File formats, the CLI and the parallel bootstrap runner live in the
//! companion `disparity` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod data_model;
pub mod emulation;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod numerics;
pub mod oracle_sim;
pub mod pipeline;
pub mod rng;
pub mod sampling_design;

pub use error::{Error, Result};
