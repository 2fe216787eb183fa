//! The convolutional flow layer `z' = z + u' ⊙ h(conv(z, w))`.
//!
//! `conv` is a dilated 1-d convolution with right zero-padding: output `i`
//! reads `z[i], z[i + r], ..., z[i + (k-1) r]`. Its Jacobian is upper
//! triangular and banded with the first tap `w[0]` on the diagonal, so the
//! layer's log-determinant is a sum of `d` scalar logs.
//!
//! The scale `u'` is never stored directly. It is derived from the free
//! vector `u_raw` and the current first tap by [`effective_scale`], which
//! keeps every diagonal factor `1 + w[0] u'_i h'(c_i)` positive for any
//! activation with `h' ∈ [0, 1]`.

use crate::error::{check_dim, Error, Result};
use crate::math::{sigmoid, softplus, softplus_inverse, Activation, RngState};

use super::solve::solve_increasing;

/// Dilated 1-d convolution with right zero-padding; output has the input's length.
pub fn conv1d(z: &[f64], kernel: &[f64], dilation: usize) -> Vec<f64> {
    let d = z.len();
    (0..d)
        .map(|i| kernel.iter().enumerate().map_while(|(j, w)| z.get(i + j * dilation).map(|zj| w * zj)).sum())
        .collect()
}

/// Adjoint of [`conv1d`]: accumulates `Jᵀ g` into `out`.
fn conv1d_transpose_into(g: &[f64], kernel: &[f64], dilation: usize, out: &mut [f64]) {
    let d = g.len();
    for (i, gi) in g.iter().enumerate() {
        for (j, w) in kernel.iter().enumerate() {
            let m = i + j * dilation;
            if m >= d {
                break;
            }
            out[m] += w * gi;
        }
    }
}

/// Maps free parameters to a scale vector satisfying `w1 · u'_i > -1`.
/// The `u_raw` whose effective scale is `target`, or the nearest reachable
/// one when `w1·target ≤ −1`.
pub fn raw_for_scale(target: f64, w1: f64) -> f64 {
    if w1 == 0.0 {
        return target;
    }
    let sp = (1.0 / w1.abs() + w1.signum() * target).max(f64::MIN_POSITIVE);
    softplus_inverse(sp)
}

pub fn effective_scale(u_raw: &[f64], w1: f64) -> Vec<f64> {
    u_raw.iter().map(|&u| scale_entry(u, w1)).collect()
}

fn scale_entry(u: f64, w1: f64) -> f64 {
    if w1 > 0.0 {
        -1.0 / w1 + softplus(u)
    } else if w1 < 0.0 {
        -1.0 / w1 - softplus(u)
    } else {
        u
    }
}

/// `(∂u'/∂u_raw, ∂u'/∂w1)` for one entry.
fn scale_partials(u: f64, w1: f64) -> (f64, f64) {
    if w1 > 0.0 {
        (sigmoid(u), 1.0 / (w1 * w1))
    } else if w1 < 0.0 {
        (-sigmoid(u), 1.0 / (w1 * w1))
    } else {
        (1.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvFlowLayer {
    dim: usize,
    dilation: usize,
    pub kernel: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub activation: Activation,
}

/// Intermediates of one forward pass, consumed by [`ConvFlowLayer::backward`].
#[derive(Debug, Clone)]
pub struct ConvFlowCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub act: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub scale: Vec<f64>,
    pub diag: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvFlowGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub u_raw: Vec<f64>,
}

impl ConvFlowLayer {
    /// A layer with all parameters zero, which is the identity map.
    pub fn new(dim: usize, kernel_width: usize, dilation: usize, activation: Activation) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if kernel_width == 0 {
            return Err(Error::invalid("kernel width must be positive"));
        }
        if dilation == 0 {
            return Err(Error::invalid("dilation must be positive"));
        }
        Ok(Self { dim, dilation, kernel: vec![0.0; kernel_width], u_raw: vec![0.0; dim], activation })
    }

    /// Draws `w ~ N(0, 0.01/k)` and effective scales `u'_i ~ N(0, 0.01)`
    /// (second argument is the variance), storing the `u_raw` that
    /// produces them. Every `w1·u'_i` is then close to 0, so the layer
    /// starts close to the identity.
    pub fn init(&mut self, rng: &mut RngState) {
        let w_std = (0.01 / self.kernel.len() as f64).sqrt();
        for w in &mut self.kernel {
            *w = rng.normal(0.0, w_std);
        }
        let w1 = self.kernel[0];
        for u in &mut self.u_raw {
            let target = rng.normal(0.0, 0.1);
            *u = raw_for_scale(target, w1);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel.len()
    }

    pub fn param_count(&self) -> usize {
        self.dim + self.kernel.len()
    }

    pub fn scale(&self) -> Vec<f64> {
        effective_scale(&self.u_raw, self.kernel[0])
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64, ConvFlowCache)> {
        check_dim(self.dim, z.len())?;
        let w1 = self.kernel[0];
        let scale = self.scale();
        let pre = conv1d(z, &self.kernel, self.dilation);
        let d = self.dim;
        let mut out = Vec::with_capacity(d);
        let mut act = Vec::with_capacity(d);
        let mut d1 = Vec::with_capacity(d);
        let mut d2 = Vec::with_capacity(d);
        let mut diag = Vec::with_capacity(d);
        let mut logdet = 0.0;
        for i in 0..d {
            let (h, h1, h2) = self.activation.eval(pre[i]);
            let factor = 1.0 + w1 * scale[i] * h1;
            if !(factor > 0.0) {
                return Err(Error::InvariantViolation { index: i, value: factor });
            }
            logdet += factor.ln();
            out.push(z[i] + scale[i] * h);
            act.push(h);
            d1.push(h1);
            d2.push(h2);
            diag.push(factor);
        }
        let cache = ConvFlowCache { input: z.to_vec(), pre, act, d1, d2, scale, diag };
        Ok((out, logdet, cache))
    }

    /// Exact inverse by back-substitution from the last dimension.
    ///
    /// Output `i` depends on `z[i]` and on entries with larger index only, so
    /// walking `i = d-1, ..., 0` reduces each step to the scalar equation
    /// `ζ + u'_i h(w1 ζ + t_i) = y_i`, which is strictly increasing in `ζ`.
    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, y.len())?;
        let d = self.dim;
        let w1 = self.kernel[0];
        let scale = self.scale();
        let act = self.activation;
        let mut z = vec![0.0; d];
        for i in (0..d).rev() {
            let tail: f64 = self.kernel[1..]
                .iter()
                .enumerate()
                .map_while(|(j, w)| z.get(i + (j + 1) * self.dilation).map(|zj| w * zj))
                .sum();
            let u = scale[i];
            z[i] = if w1 == 0.0 || u == 0.0 {
                y[i] - u * act.value(tail)
            } else {
                let target = y[i];
                solve_increasing(
                    |x| {
                        let (h, h1, _) = act.eval(w1 * x + tail);
                        (x + u * h - target, 1.0 + u * w1 * h1)
                    },
                    target,
                )
                .map_err(|iterations| Error::NoConvergence { index: i, iterations })?
            };
        }
        Ok(z)
    }

    /// Gradients of `⟨g_out, f(z)⟩ + lam · logdet(z)` with respect to the
    /// input, the kernel and `u_raw`.
    pub fn backward(&self, cache: &ConvFlowCache, g_out: &[f64], lam: f64) -> ConvFlowGrads {
        let d = self.dim;
        let w1 = self.kernel[0];
        let ConvFlowCache { input, act, d1, d2, scale, diag, .. } = cache;

        let mut g_pre = vec![0.0; d];
        let mut g_kernel = vec![0.0; self.kernel.len()];
        let mut g_u_raw = vec![0.0; d];
        let mut g_w1 = 0.0;
        for i in 0..d {
            let inv = 1.0 / diag[i];
            g_pre[i] = g_out[i] * scale[i] * d1[i] + lam * w1 * scale[i] * d2[i] * inv;
            let g_scale = g_out[i] * act[i] + lam * w1 * d1[i] * inv;
            // direct dependence of the log-det on the diagonal tap
            g_w1 += lam * scale[i] * d1[i] * inv;
            let (du_draw, du_dw1) = scale_partials(self.u_raw[i], w1);
            g_u_raw[i] = g_scale * du_draw;
            g_w1 += g_scale * du_dw1;
        }
        for (j, gw) in g_kernel.iter_mut().enumerate() {
            *gw = (0..d).map_while(|i| input.get(i + j * self.dilation).map(|zj| g_pre[i] * zj)).sum();
        }
        g_kernel[0] += g_w1;

        let mut g_in = g_out.to_vec();
        conv1d_transpose_into(&g_pre, &self.kernel, self.dilation, &mut g_in);
        ConvFlowGrads { input: g_in, kernel: g_kernel, u_raw: g_u_raw }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_conv_matrix(d: usize, kernel: &[f64], r: usize) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; d]; d];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, w) in kernel.iter().enumerate() {
                if i + j * r < d {
                    row[i + j * r] = *w;
                }
            }
        }
        m
    }

    #[test]
    fn identity_kernel() {
        let z = [0.3, -1.2, 4.0, 2.5];
        for r in 1..4 {
            assert_eq!(conv1d(&z, &[1.0], r), z.to_vec());
        }
    }

    #[test]
    fn shift_with_right_padding() {
        assert_eq!(conv1d(&[1.0, 2.0, 3.0], &[0.0, 1.0], 1), vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn matches_banded_matrix() {
        let mut rng = RngState::new(5);
        let z = rng.sample_standard_gaussian(8);
        let w = rng.sample_standard_gaussian(3);
        let m = dense_conv_matrix(8, &w, 1);
        let expected: Vec<f64> = m.iter().map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum()).collect();
        let got = conv1d(&z, &w, 1);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let mut rng = RngState::new(6);
        for r in 1..4 {
            let z = rng.sample_standard_gaussian(9);
            let g = rng.sample_standard_gaussian(9);
            let w = rng.sample_standard_gaussian(3);
            let lhs: f64 = conv1d(&z, &w, r).iter().zip(&g).map(|(a, b)| a * b).sum();
            let mut t = vec![0.0; 9];
            conv1d_transpose_into(&g, &w, r, &mut t);
            let rhs: f64 = t.iter().zip(&z).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_scale_cases() {
        assert_eq!(effective_scale(&[3.0, -1.0], 0.0), vec![3.0, -1.0]);
        let u = effective_scale(&[0.0], 1.0)[0];
        assert!((u - (-1.0 + std::f64::consts::LN_2)).abs() < 1e-15);
        assert!((u + 0.306853).abs() < 1e-6);
        assert!(u > -1.0);
        let mut rng = RngState::new(9);
        for _ in 0..1000 {
            let w1 = rng.normal(0.0, 2.0);
            let raw = rng.sample_standard_gaussian(5).iter().map(|x| 5.0 * x).collect::<Vec<_>>();
            let min = effective_scale(&raw, w1).iter().map(|u| w1 * u).fold(f64::INFINITY, f64::min);
            assert!(min > -1.0);
        }
    }

    #[test]
    fn zero_scale_is_identity() {
        let layer = ConvFlowLayer::new(4, 3, 1, Activation::Tanh).unwrap();
        let z = [0.5, -0.1, 2.0, 1.0];
        let (out, logdet, _) = layer.forward(&z).unwrap();
        assert_eq!(out, z.to_vec());
        assert_eq!(logdet, 0.0);
        assert_eq!(layer.inverse(&z).unwrap(), z.to_vec());
    }

    #[test]
    fn zero_first_tap_has_zero_logdet() {
        let mut layer = ConvFlowLayer::new(2, 2, 1, Activation::Tanh).unwrap();
        layer.kernel = vec![0.0, 1.0];
        layer.u_raw = vec![0.7, -0.4];
        let (_, logdet, cache) = layer.forward(&[0.3, 1.1]).unwrap();
        assert_eq!(cache.pre, vec![1.1, 0.0]);
        assert_eq!(logdet, 0.0);
    }

    #[test]
    fn scalar_inverse_matches_bisection() {
        // d = 1, w1 = 1, u' = 0.5: solve ζ + 0.5 tanh(ζ) = 1.
        let mut layer = ConvFlowLayer::new(1, 1, 1, Activation::Tanh).unwrap();
        layer.kernel = vec![1.0];
        // -1 + softplus(u_raw) = 0.5  =>  u_raw = ln(e^1.5 - 1)
        layer.u_raw = vec![(1.5f64.exp() - 1.0).ln()];
        assert!((layer.scale()[0] - 0.5).abs() < 1e-14);

        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + 0.5 * mid.tanh() < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = layer.inverse(&[1.0]).unwrap();
        assert!((z[0] - lo).abs() < 1e-12, "{} vs {}", z[0], lo);
    }

    #[test]
    fn leaky_relu_logdet_path_vanishes() {
        let mut rng = RngState::new(21);
        let mut layer = ConvFlowLayer::new(6, 3, 2, Activation::LeakyRelu).unwrap();
        for w in &mut layer.kernel {
            *w = rng.normal(0.0, 1.0);
        }
        for u in &mut layer.u_raw {
            *u = rng.normal(0.0, 1.0);
        }
        let z = rng.sample_standard_gaussian(6);
        let (_, _, cache) = layer.forward(&z).unwrap();
        assert!(cache.pre.iter().all(|c| c.abs() > 1e-3));
        let g = layer.backward(&cache, &[0.0; 6], 1.0);
        assert!(g.input.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let mut rng = RngState::new(4);
        let mut layer = ConvFlowLayer::new(5, 2, 1, Activation::Tanh).unwrap();
        layer.init(&mut rng);
        let z = rng.sample_standard_gaussian(5);
        let (_, _, cache) = layer.forward(&z).unwrap();
        let g = layer.backward(&cache, &[0.0; 5], 0.0);
        assert!(g.input.iter().chain(&g.kernel).chain(&g.u_raw).all(|x| *x == 0.0));
    }

    #[test]
    fn raw_for_scale_inverts_effective_scale() {
        for w1 in [-0.8, -0.05, 0.0, 0.07, 1.3] {
            let targets = [-0.2, 0.0, 0.15];
            let raw: Vec<f64> = targets.iter().map(|&t| raw_for_scale(t, w1)).collect();
            for (u, t) in effective_scale(&raw, w1).iter().zip(targets) {
                assert!((u - t).abs() < 1e-9, "w1={w1} target={t} got {u}");
            }
        }
    }

    #[test]
    fn init_starts_near_identity() {
        let mut rng = RngState::new(11);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let mut layer = ConvFlowLayer::new(8, 2, 1, Activation::Tanh).unwrap();
            layer.init(&mut rng);
            let w1 = layer.kernel[0];
            for u in layer.scale() {
                worst = worst.max((w1 * u).abs());
            }
        }
        // |w1| and |u'| are both a few tenths at most
        assert!(worst < 0.2, "largest |w1 u'| = {worst}");
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ConvFlowLayer::new(0, 2, 1, Activation::Tanh).is_err());
        assert!(ConvFlowLayer::new(2, 0, 1, Activation::Tanh).is_err());
        assert!(ConvFlowLayer::new(2, 2, 0, Activation::Tanh).is_err());
        let layer = ConvFlowLayer::new(3, 2, 1, Activation::Tanh).unwrap();
        assert!(layer.forward(&[1.0, 2.0]).is_err());
    }
}
