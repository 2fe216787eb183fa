//! Inverse autoregressive flow layer `z' = m(z) + exp(s(z)) ⊙ z`.
//!
//! `(m, s)` come from a two-layer MADE-style network. Inputs carry degrees
//! `1..=d`, hidden units cycle through degrees `1..=d-1`, and output `i`
//! (degree `i`) only sees hidden units of strictly smaller degree, so both
//! heads are strictly autoregressive and output 1 is a pure bias.

use crate::error::{check_dim, Error, Result};
use crate::math::{Activation, RngState};

/// `s` is clamped to this range before exponentiation.
pub const LOG_SCALE_CLAMP: f64 = 7.0;

const HIDDEN_ACTIVATION: Activation = Activation::Elu;

#[derive(Debug, Clone, PartialEq)]
pub struct IafLayer {
    dim: usize,
    hidden: usize,
    /// `hidden × dim`, row-major.
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    /// `dim × hidden`, row-major.
    pub w_shift: Vec<f64>,
    pub b_shift: Vec<f64>,
    /// `dim × hidden`, row-major.
    pub w_log_scale: Vec<f64>,
    pub b_log_scale: Vec<f64>,
    mask_in: Vec<f64>,
    mask_out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IafCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub hidden_d1: Vec<f64>,
    pub log_scale: Vec<f64>,
    pub clamped: Vec<bool>,
    pub sigma: Vec<f64>,
}

/// Gradients in parameter order: `w_in, b_in, w_shift, b_shift, w_log_scale, b_log_scale`.
#[derive(Debug, Clone)]
pub struct IafGrads {
    pub input: Vec<f64>,
    pub params: Vec<f64>,
}

/// Default hidden width for dimension `d`.
pub fn default_hidden(dim: usize) -> usize {
    (2 * dim).max(16)
}

impl IafLayer {
    pub fn new(dim: usize, hidden: usize) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::invalid("IAF dimension and hidden width must be positive"));
        }
        let in_degree = |i: usize| i + 1;
        let hidden_degree = |k: usize| if dim > 1 { k % (dim - 1) + 1 } else { 0 };
        let mut mask_in = vec![0.0; hidden * dim];
        for k in 0..hidden {
            for i in 0..dim {
                if hidden_degree(k) >= 1 && hidden_degree(k) >= in_degree(i) {
                    mask_in[k * dim + i] = 1.0;
                }
            }
        }
        let mut mask_out = vec![0.0; dim * hidden];
        for i in 0..dim {
            for k in 0..hidden {
                if hidden_degree(k) >= 1 && in_degree(i) > hidden_degree(k) {
                    mask_out[i * hidden + k] = 1.0;
                }
            }
        }
        Ok(Self {
            dim,
            hidden,
            w_in: vec![0.0; hidden * dim],
            b_in: vec![0.0; hidden],
            w_shift: vec![0.0; dim * hidden],
            b_shift: vec![0.0; dim],
            w_log_scale: vec![0.0; dim * hidden],
            b_log_scale: vec![0.0; dim],
            mask_in,
            mask_out,
        })
    }

    /// Weights `~ N(0, 0.01)`, biases 0.
    pub fn init(&mut self, rng: &mut RngState) {
        for w in self.w_in.iter_mut().chain(&mut self.w_shift).chain(&mut self.w_log_scale) {
            *w = rng.normal(0.0, 0.1);
        }
        for b in self.b_in.iter_mut().chain(&mut self.b_shift).chain(&mut self.b_log_scale) {
            *b = 0.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_count(&self) -> usize {
        3 * self.hidden * self.dim + self.hidden + 2 * self.dim
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_shift,
            &mut self.b_shift,
            &mut self.w_log_scale,
            &mut self.b_log_scale,
        ]
    }

    pub(crate) fn params(&self) -> [&Vec<f64>; 6] {
        [&self.w_in, &self.b_in, &self.w_shift, &self.b_shift, &self.w_log_scale, &self.b_log_scale]
    }

    fn hidden_layer(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (d, hdim) = (self.dim, self.hidden);
        let mut pre = Vec::with_capacity(hdim);
        let mut act = Vec::with_capacity(hdim);
        let mut d1 = Vec::with_capacity(hdim);
        for k in 0..hdim {
            let row = k * d;
            let p = self.b_in[k] + (0..d).map(|i| self.w_in[row + i] * self.mask_in[row + i] * z[i]).sum::<f64>();
            let (a, a1, _) = HIDDEN_ACTIVATION.eval(p);
            pre.push(p);
            act.push(a);
            d1.push(a1);
        }
        (pre, act, d1)
    }

    fn head(&self, weights: &[f64], bias: &[f64], hidden: &[f64]) -> Vec<f64> {
        let hdim = self.hidden;
        (0..self.dim)
            .map(|i| {
                let row = i * hdim;
                bias[i] + (0..hdim).map(|k| weights[row + k] * self.mask_out[row + k] * hidden[k]).sum::<f64>()
            })
            .collect()
    }

    /// Shift `m` and unclamped log-scale `s` of the autoregressive network.
    pub fn masked_net(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.dim, z.len())?;
        let (_, hidden, _) = self.hidden_layer(z);
        Ok((self.head(&self.w_shift, &self.b_shift, &hidden), self.head(&self.w_log_scale, &self.b_log_scale, &hidden)))
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64, IafCache)> {
        check_dim(self.dim, z.len())?;
        let (pre, hidden, hidden_d1) = self.hidden_layer(z);
        let shift = self.head(&self.w_shift, &self.b_shift, &hidden);
        let raw = self.head(&self.w_log_scale, &self.b_log_scale, &hidden);
        let clamped: Vec<bool> = raw.iter().map(|s| s.abs() > LOG_SCALE_CLAMP).collect();
        let log_scale: Vec<f64> = raw.iter().map(|s| s.clamp(-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)).collect();
        let sigma: Vec<f64> = log_scale.iter().map(|s| s.exp()).collect();
        let out = (0..self.dim).map(|i| shift[i] + sigma[i] * z[i]).collect();
        let logdet = log_scale.iter().sum();
        let cache = IafCache { input: z.to_vec(), pre, hidden, hidden_d1, log_scale, clamped, sigma };
        Ok((out, logdet, cache))
    }

    pub fn backward(&self, cache: &IafCache, g_out: &[f64], lam: f64) -> IafGrads {
        let (d, hdim) = (self.dim, self.hidden);
        let IafCache { input, hidden, hidden_d1, clamped, sigma, .. } = cache;

        let g_shift = g_out;
        let g_log_scale: Vec<f64> =
            (0..d).map(|i| if clamped[i] { 0.0 } else { g_out[i] * input[i] * sigma[i] + lam }).collect();

        let mut g_w_shift = vec![0.0; d * hdim];
        let mut g_w_log_scale = vec![0.0; d * hdim];
        let mut g_hidden = vec![0.0; hdim];
        for i in 0..d {
            let row = i * hdim;
            for k in 0..hdim {
                let mask = self.mask_out[row + k];
                g_w_shift[row + k] = g_shift[i] * hidden[k] * mask;
                g_w_log_scale[row + k] = g_log_scale[i] * hidden[k] * mask;
                g_hidden[k] += mask * (self.w_shift[row + k] * g_shift[i] + self.w_log_scale[row + k] * g_log_scale[i]);
            }
        }

        let g_pre: Vec<f64> = g_hidden.iter().zip(hidden_d1).map(|(g, a1)| g * a1).collect();
        let mut g_in: Vec<f64> = (0..d).map(|i| g_out[i] * sigma[i]).collect();
        let mut g_w_in = vec![0.0; hdim * d];
        for (k, gp) in g_pre.iter().enumerate() {
            let row = k * d;
            for i in 0..d {
                let mask = self.mask_in[row + i];
                g_w_in[row + i] = gp * input[i] * mask;
                g_in[i] += self.w_in[row + i] * mask * gp;
            }
        }

        let mut params = Vec::with_capacity(self.param_count());
        params.extend(g_w_in);
        params.extend(&g_pre);
        params.extend(g_w_shift);
        params.extend(g_shift);
        params.extend(g_w_log_scale);
        params.extend(g_log_scale);
        IafGrads { input: g_in, params }
    }
}
