//! Fitting a flow to an unnormalized 2-d target by minimizing the reverse KL
//! divergence `E[log q0(z0)] - E[log|det J|] + E[U(f(z0))]`, estimated with
//! samples from the base Gaussian. The normalizer of the target is an
//! additive constant and is never computed.

mod energy;
mod gradcheck;
mod kl;
mod train;

pub use energy::Energy;
pub use gradcheck::{check_gradient, gradcheck, GradCheckReport, ParamCheck, GRADCHECK_SCALE_FLOOR};
pub use kl::{kl_loss, kl_loss_grad, KlLossReport};
pub use train::{train, train_with, TrainConfig, TrainHistory, TrainRecord};
