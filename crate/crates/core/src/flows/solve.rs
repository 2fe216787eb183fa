//! Safeguarded Newton iteration for strictly increasing scalar equations.

pub const ABS_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;

/// Finds the root of a strictly increasing `g`, where `eval(x)` returns
/// `(g(x), g'(x))`. Starts at `x0`. While a side of the bracket is still open
/// it is pushed outwards with doubling steps; once closed, Newton steps are
/// taken only if they stay inside the bracket and at least halve the previous
/// step, otherwise the bracket is bisected.
///
/// Returns `Err(iterations)` if no root is found within [`MAX_ITER`] steps.
pub fn solve_increasing<F>(eval: F, x0: f64) -> Result<f64, usize>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut x = x0;
    let mut stride = f64::NAN;
    let mut last_step = f64::INFINITY;

    for _ in 0..MAX_ITER {
        let (g, dg) = eval(x);
        if g == 0.0 {
            return Ok(x);
        }
        if g.is_nan() {
            return Err(MAX_ITER);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if stride.is_nan() {
            stride = g.abs().max(1.0);
        }

        let newton = x - g / dg;
        let newton_ok = newton.is_finite() && newton > lo && newton < hi && 2.0 * (newton - x).abs() <= last_step;
        let next = if newton_ok {
            newton
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if newton.is_finite() && newton > lo && newton < hi {
            // bracket still open: accept Newton while it moves towards the open side
            newton
        } else if lo.is_finite() {
            stride *= 2.0;
            lo + stride
        } else {
            stride *= 2.0;
            hi - stride
        };

        let step = (next - x).abs();
        if step <= ABS_TOL || (hi - lo) <= ABS_TOL {
            return Ok(next);
        }
        last_step = step;
        x = next;
    }
    Err(MAX_ITER)
}
