//! Numerical primitives shared by the flow layers and the training loop.

mod activation;
mod adam;
mod rng;

pub use activation::{sigmoid, softplus, softplus_inverse, Activation, LEAKY_RELU_SLOPE};
pub use adam::{AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS, DEFAULT_LR};
pub use rng::RngState;

use std::f64::consts::PI;

/// Log-density of the standard Gaussian `N(0, I_d)` at `z`.
pub fn log_standard_gaussian(z: &[f64]) -> f64 {
    let d = z.len() as f64;
    -0.5 * d * (2.0 * PI).ln() - 0.5 * dot(z, z)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinity norm of `a - b`.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
