//! Simulation of LQG control over an AWGN channel when the controller
//! observes side information about the state.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod harness;
pub mod jscc;
pub mod numerics;
pub mod sysmodel;

pub use error::{Error, Result};
