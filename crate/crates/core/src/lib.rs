//! Lossless transient shaping for rigid-body attitude control.
//!
//! A nominal passive attitude controller is complemented by a fictitious
//! gyroscopic torque `w x a`. The shaping vector `a` is chosen online by a
//! nonlinear MPC; because `w x a` does no work, the closed-loop Lyapunov
//! function of the nominal controller stays valid for any choice of `a`.

pub mod checks;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod integrators;
pub mod ocp;
pub mod scalar;
pub mod scenario;
pub mod so3;

pub use error::{Error, Result};
