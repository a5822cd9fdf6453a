//! Excess-noise and secret-key-rate modeling for Gaussian-modulated
//! coherent-state QKD read out by a practical balanced homodyne detector.
//!
//! The crate is `no_std` (it needs `alloc`). It covers:
//!
//! - [`model`]: parameter types, the noise budget with explicit
//!   input/output referral, and the closed-form detector noise terms
//!   (electronic, pulse overlap, LO fluctuation, CMRR conversions).
//! - [`keyrate`]: mutual informations and the reverse-reconciliation key rate.
//! - [`montecarlo`]: a seeded pulse-train simulator with window integration
//!   and lag-1 correlation analysis.
//! - [`fit`]: least-squares fits and the variance-vs-LO noise decomposition.
//! - [`analysis`]: sweeps over repetition rate, CMRR, LO level and distance,
//!   and the LO-level optimizer built on [`optimize`].

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod fit;
pub mod keyrate;
pub mod model;
pub mod montecarlo;
pub mod optimize;

pub use error::{Error, Result};
pub use keyrate::{secret_key_rate, KeyRateResult, OverlapModel, SystemParams};
pub use model::NoiseBudget;
