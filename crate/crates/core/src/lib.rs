//! Minimum-beamformer analysis for integrated sensing and communication.
//!
//! The crate provides the numerical primitives, channel and sensing-metric
//! models, the closed-form bounds on the number of beamformers, a dense
//! conic solver with the semidefinite relaxations, and the constructive
//! rank reduction that attains the bounds.

// Input checks are written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod metrics;
pub mod numerics;
pub mod reduce;
pub mod sdp;
