//! Identification of static friction laws for robot joints.
//!
//! The crate fits velocity-torque data two ways: directly against the
//! smoothed Stribeck model when the functional form is known, and with a
//! Kolmogorov-Arnold network (spline edge activations) when it is not. A
//! trained network can be pruned by attribution scores and converted into a
//! closed-form expression via a symbolic function library.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod friction;
pub mod kan;
pub mod metrics;
pub mod optim;
pub mod prune;
pub mod report;
pub mod spline;
pub mod symbolic;

pub use error::{Error, Result};
