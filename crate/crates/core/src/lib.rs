//! Simulation and analysis of hard X-ray down-converted photon pairs
//! recorded on a four-chip time-stamping pixel detector.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coincidence;
pub mod detector;
pub mod error;
pub mod fit;
pub mod hit;
pub mod identification;
pub mod imaging;
pub mod kinematics;
pub mod metadata;
pub mod pipeline;
pub mod simulator;

pub use error::{Error, Result};
pub use hit::RawHit;
pub use metadata::OutputMeta;
