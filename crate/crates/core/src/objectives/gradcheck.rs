use crate::error::{Error, Result};
use crate::flows::FlowStack;

use super::{kl_loss, kl_loss_grad, Energy};

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)` so
/// that derivatives which vanish analytically are compared in absolute terms.
pub const GRADCHECK_SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCheck {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<ParamCheck>,
    pub worst_index: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_SCALE_FLOOR)
}

/// Compares `analytic` against central differences of `f` at `x` with step `h`.
pub fn check_gradient<F>(mut f: F, x: &[f64], analytic: &[f64], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if x.len() != analytic.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: analytic.len() });
    }
    let mut probe = x.to_vec();
    let mut entries = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        entries.push(ParamCheck {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: relative_error(analytic[i], numeric),
        });
    }
    let (worst_index, max_rel_error) = entries.iter().map(|e| (e.index, e.rel_error)).fold((0, 0.0), |acc, (i, e)| {
        if e > acc.1 || e.is_nan() {
            (i, e)
        } else {
            acc
        }
    });
    let passed = max_rel_error <= tol;
    Ok(GradCheckReport { entries, worst_index, max_rel_error, tol, passed })
}

/// Checks [`kl_loss_grad`] against central differences of [`kl_loss`] over
/// every stack parameter, on a fixed batch.
pub fn gradcheck(stack: &FlowStack, energy: Energy, batch: &[Vec<f64>], h: f64, tol: f64) -> Result<GradCheckReport> {
    let (_, analytic) = kl_loss_grad(stack, energy, batch)?;
    let params = stack.param_vector();
    let mut probe = stack.clone();
    check_gradient(
        |p| {
            probe.load_params(p)?;
            Ok(kl_loss(&probe, energy, batch)?.loss)
        },
        &params,
        &analytic,
        h,
        tol,
    )
}
