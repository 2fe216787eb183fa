use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Unnormalized 2-d target `p(z) ∝ exp(-U(z))`.
///
/// `U1` is a ring of radius 2 cut by two Gaussian bumps at `z1 = ±2`.
/// `U2` is a sinusoidal ridge `z2 ≈ sin(π z1 / 2)` with width 0.4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Energy {
    U1,
    U2,
}

impl Energy {
    pub fn eval(self, z: &[f64]) -> Result<f64> {
        check_dim(2, z.len())?;
        Ok(match self {
            Energy::U1 => u1(z[0], z[1]),
            Energy::U2 => u2(z[0], z[1]),
        })
    }

    /// Analytic `∇U(z)`.
    pub fn grad(self, z: &[f64]) -> Result<[f64; 2]> {
        check_dim(2, z.len())?;
        Ok(match self {
            Energy::U1 => u1_grad(z[0], z[1]),
            Energy::U2 => u2_grad(z[0], z[1]),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Energy::U1 => "u1",
            Energy::U2 => "u2",
        }
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Energy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "u1" => Ok(Energy::U1),
            "u2" => Ok(Energy::U2),
            _ => Err(format!("unknown energy `{s}` (expected u1 or u2)")),
        }
    }
}

const U1_BUMP_WIDTH: f64 = 0.6;
const U2_WIDTH: f64 = 0.4;

/// Exponents of the two bumps in U1.
fn u1_bumps(z1: f64) -> (f64, f64) {
    let a = -0.5 * ((z1 - 2.0) / U1_BUMP_WIDTH).powi(2);
    let b = -0.5 * ((z1 + 2.0) / U1_BUMP_WIDTH).powi(2);
    (a, b)
}

fn u1(z1: f64, z2: f64) -> f64 {
    let r = z1.hypot(z2);
    let ring = 0.5 * ((r - 2.0) / 4.0).powi(2);
    let (a, b) = u1_bumps(z1);
    let hi = a.max(b);
    let lse = hi + ((a - hi).exp() + (b - hi).exp()).ln();
    ring - lse
}

fn u1_grad(z1: f64, z2: f64) -> [f64; 2] {
    let r = z1.hypot(z2);
    // ring term; its gradient is set to 0 at the origin where ‖z‖ is not differentiable
    let ring_scale = if r > 0.0 { (r - 2.0) / 16.0 / r } else { 0.0 };
    let (a, b) = u1_bumps(z1);
    let hi = a.max(b);
    let (ea, eb) = ((a - hi).exp(), (b - hi).exp());
    let (pa, pb) = (ea / (ea + eb), eb / (ea + eb));
    let var = U1_BUMP_WIDTH * U1_BUMP_WIDTH;
    let da = -(z1 - 2.0) / var;
    let db = -(z1 + 2.0) / var;
    [ring_scale * z1 - (pa * da + pb * db), ring_scale * z2]
}

fn u2(z1: f64, z2: f64) -> f64 {
    let resid = (z2 - (PI * z1 / 2.0).sin()) / U2_WIDTH;
    0.5 * resid * resid
}

fn u2_grad(z1: f64, z2: f64) -> [f64; 2] {
    let resid = (z2 - (PI * z1 / 2.0).sin()) / U2_WIDTH;
    let g2 = resid / U2_WIDTH;
    [-g2 * (PI / 2.0) * (PI * z1 / 2.0).cos(), g2]
}
