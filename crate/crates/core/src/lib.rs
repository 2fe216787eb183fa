//! Convolutional normalizing flows.
//!
//! The central layer is [`flows::ConvFlowLayer`], `z' = z + u' ⊙ h(conv(z, w))`
//! with a dilated, right-padded 1-d convolution. Its Jacobian is triangular,
//! so the log-determinant costs `O(d)` and the inverse is a sequence of scalar
//! monotone solves. Planar and inverse-autoregressive layers are provided as
//! baselines. The [`objectives`] module fits stacks to unnormalized 2-d
//! energies, and [`density`] evaluates the resulting exact densities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod flows;
pub mod math;

pub use error::{Error, Result};
pub use flows::{FlowStack, Layer};
pub mod objectives;
