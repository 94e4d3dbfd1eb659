//! Socially compliant eco-driving control for an autonomous vehicle in a
//! mixed platoon.
//!
//! Human drivers follow the intelligent driver model, the autonomous vehicle
//! follows an OVRV law plus a bounded additive control. The control minimizes
//! an SVO-weighted trade-off between the AV's own acceleration effort and its
//! human follower's speed objective, solved with a projected-gradient
//! forward-backward sweep on the minimum-principle conditions.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod objective;
pub mod pmp;
pub mod scenario;
pub mod vehicle;

pub use error::{Error, Result};
