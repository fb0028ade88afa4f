//! RF device fingerprinting from raw IQ windows.
//!
//! The crate covers the radio simulator ([`sim`]), windowed datasets
//! ([`dataset`]), the residual and baseline classifiers with the
//! distance-gated ensemble ([`classifiers`]), training loops ([`training`])
//! and evaluation artifacts ([`report`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod report;
pub mod seed;
pub mod sim;
pub mod training;

pub use error::{CoreError, Result};
