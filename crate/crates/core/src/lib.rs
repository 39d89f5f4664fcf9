//! Low-rank Jacobian gradients with error-feedback correction.
//!
//! The gradient of a loss factors through the model output as `g = Jᵀδ`.
//! GradLite replaces `J` by a rank-`k` factor `u vᵀ`, so only the projected
//! signal `uᵀδ` is needed, and feeds the approximation residual back into
//! later updates. The crate also carries baseline optimizers, a suite of
//! small problems with materializable Jacobians, and an experiment harness.

pub mod error;
pub mod error_feedback;
pub mod harness;
pub mod jacobian_approx;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
