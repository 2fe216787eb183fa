use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Monotone scalar nonlinearities with first derivative in `[0, 1]`.
///
/// Piecewise-linear kinds report a zero second derivative everywhere. At the
/// kink `x = 0` all kinds use the left limit of each derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softplus,
    Relu,
    LeakyRelu,
    Elu,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softplus,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Elu,
    ];

    /// Returns `(h(x), h'(x), h''(x))`.
    pub fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
            Activation::Softplus => {
                let s = sigmoid(x);
                (softplus(x), s, s * (1.0 - s))
            }
            Activation::Relu => {
                if x > 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    (LEAKY_RELU_SLOPE * x, LEAKY_RELU_SLOPE, 0.0)
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    let e = x.exp();
                    (x.exp_m1(), e, e)
                }
            }
        }
    }

    pub fn value(self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// Points where the derivative jumps.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            Activation::Relu | Activation::LeakyRelu | Activation::Elu => &[0.0],
            _ => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Elu => "elu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown activation `{s}`"))
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`: `ln(e^y − 1)`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp()).ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
