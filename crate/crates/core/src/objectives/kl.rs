use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::math::log_standard_gaussian;

use super::Energy;

/// Monte-Carlo terms of the KL objective over one batch.
///
/// `loss = entropy_term - logdet_term + energy_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlLossReport {
    pub loss: f64,
    /// Mean `log q0(z0)`.
    pub entropy_term: f64,
    /// Mean total log-determinant.
    pub logdet_term: f64,
    /// Mean `U(f(z0))`.
    pub energy_term: f64,
}

impl KlLossReport {
    fn from_sums(entropy: f64, logdet: f64, energy: f64, n: usize) -> Self {
        let n = n as f64;
        let (entropy_term, logdet_term, energy_term) = (entropy / n, logdet / n, energy / n);
        Self { loss: entropy_term - logdet_term + energy_term, entropy_term, logdet_term, energy_term }
    }
}

fn check_batch(stack: &FlowStack, batch: &[Vec<f64>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("batch must contain at least one sample"));
    }
    if stack.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, actual: stack.dim() });
    }
    Ok(())
}

pub fn kl_loss(stack: &FlowStack, energy: Energy, batch: &[Vec<f64>]) -> Result<KlLossReport> {
    check_batch(stack, batch)?;
    let (mut ent, mut ld, mut en) = (0.0, 0.0, 0.0);
    for z0 in batch {
        let (zk, logdet) = stack.transform(z0)?;
        ent += log_standard_gaussian(z0);
        ld += logdet;
        en += energy.eval(&zk)?;
    }
    Ok(KlLossReport::from_sums(ent, ld, en, batch.len()))
}

/// Loss report and gradient of the loss w.r.t. [`FlowStack::param_vector`].
///
/// Each sample contributes `stack.backward` with `g_out = ∇U(zK)/n` and
/// `lam = -1/n`; contributions are summed in batch order.
pub fn kl_loss_grad(stack: &FlowStack, energy: Energy, batch: &[Vec<f64>]) -> Result<(KlLossReport, Vec<f64>)> {
    check_batch(stack, batch)?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; stack.param_count()];
    let (mut ent, mut ld, mut en) = (0.0, 0.0, 0.0);
    for z0 in batch {
        let trace = stack.forward(z0)?;
        ent += log_standard_gaussian(z0);
        ld += trace.total_logdet;
        en += energy.eval(&trace.output)?;
        let g_out = energy.grad(&trace.output)?.map(|g| g / n);
        let grads = stack.backward(&trace, &g_out, -1.0 / n);
        for (acc, g) in grad.iter_mut().zip(&grads.params) {
            *acc += g;
        }
    }
    Ok((KlLossReport::from_sums(ent, ld, en, batch.len()), grad))
}
