//! Deterministic simulator and control library for planar cable-driven
//! parallel robots.
//!
//! The payload moves in the x/z plane (x right, z up) and rotates by `theta`
//! counterclockwise. Every cable module contributes one column to the wrench
//! Jacobian; a box-constrained QP turns a desired wrench into tensions, which
//! an actuator model with stiction realises at 1 kHz.

// `!(a > b)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuator;
pub mod allocator;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod kinematics;
pub mod model;
pub mod sim;

pub use error::{Error, Result};
pub use model::{ModuleGeometry, PayloadModel, PlanarPose, PlanarTwist, TensionVector, Wrench};
