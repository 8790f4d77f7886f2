//! Differentially private particle flows for the Gaussian-smoothed sliced
//! Wasserstein distance.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: random directions on the sphere and projections onto them.
//! - [`ot1d`]: empirical one-dimensional transport (CDF, quantiles, potential derivative).
//! - [`mechanism`]: the Gaussian mechanism on projected data and its sensitivity calibration.
//! - [`flow`]: drift estimation, Euler–Maruyama stepping and the two flow variants.
//! - [`accountant`]: the privacy ledger and Rényi composition.
//! - [`metrics`]: sliced (and smoothed sliced) Wasserstein estimators for evaluation.
//! - [`datagen`]: toy mixtures, dataset I/O and row normalisation.
//!
//! All randomness flows through [`rng`], which derives independent, counter-keyed
//! streams from a single run seed so that results do not depend on thread scheduling.

pub mod accountant;
pub mod datagen;
mod error;
pub mod flow;
pub mod geometry;
pub mod mechanism;
pub mod metrics;
pub mod ot1d;
pub mod rng;

pub use error::{Error, Result};
