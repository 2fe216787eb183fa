//! Planar flow `z' = z + û h(wᵀz + b)`, a forward-only baseline.
//!
//! `û` is derived from the free vector `u_raw` so that `wᵀû ≥ -1 + 1e-7`:
//! `û = u_raw + (max(softplus(wᵀu_raw), 1e-7) - 1 - wᵀu_raw) · w / ‖w‖²`.
//! With `w = 0` the map is `z + u_raw h(b)` and `û = u_raw`.

use crate::error::{check_dim, Error, Result};
use crate::math::{dot, sigmoid, softplus, Activation, RngState};

const MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarLayer {
    dim: usize,
    pub w: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub b: f64,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct PlanarCache {
    pub input: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub pre: f64,
    pub act: f64,
    pub d1: f64,
    pub d2: f64,
    pub det: f64,
}

#[derive(Debug, Clone)]
pub struct PlanarGrads {
    pub input: Vec<f64>,
    pub w: Vec<f64>,
    pub u_raw: Vec<f64>,
    pub b: f64,
}

impl PlanarLayer {
    pub fn new(dim: usize, activation: Activation) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(Self { dim, w: vec![0.0; dim], u_raw: vec![0.0; dim], b: 0.0, activation })
    }

    /// Weights `~ N(0, 0.01)`, bias 0.
    pub fn init(&mut self, rng: &mut RngState) {
        for x in self.w.iter_mut().chain(self.u_raw.iter_mut()) {
            *x = rng.normal(0.0, 0.1);
        }
        self.b = 0.0;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        2 * self.dim + 1
    }

    fn correction(a: f64) -> (f64, f64) {
        let sp = softplus(a);
        if sp > MARGIN {
            (sp - 1.0 - a, sigmoid(a) - 1.0)
        } else {
            (MARGIN - 1.0 - a, -1.0)
        }
    }

    pub fn u_hat(&self) -> Vec<f64> {
        let norm2 = dot(&self.w, &self.w);
        if norm2 == 0.0 {
            return self.u_raw.clone();
        }
        let (m, _) = Self::correction(dot(&self.w, &self.u_raw));
        self.u_raw.iter().zip(&self.w).map(|(u, w)| u + m * w / norm2).collect()
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64, PlanarCache)> {
        check_dim(self.dim, z.len())?;
        let u_hat = self.u_hat();
        let pre = dot(&self.w, z) + self.b;
        let (act, d1, d2) = self.activation.eval(pre);
        let det = 1.0 + d1 * dot(&u_hat, &self.w);
        let out = z.iter().zip(&u_hat).map(|(zi, ui)| zi + ui * act).collect();
        let cache = PlanarCache { input: z.to_vec(), u_hat, pre, act, d1, d2, det };
        Ok((out, det.abs().ln(), cache))
    }

    pub fn backward(&self, cache: &PlanarCache, g_out: &[f64], lam: f64) -> PlanarGrads {
        let PlanarCache { input, u_hat, act, d1, d2, det, .. } = cache;
        let s = dot(u_hat, &self.w);
        let g_pre = dot(g_out, u_hat) * d1 + lam * d2 * s / det;

        let g_in: Vec<f64> = g_out.iter().zip(&self.w).map(|(g, w)| g + g_pre * w).collect();
        // gradient w.r.t. û, and the direct part w.r.t. w
        let g_uhat: Vec<f64> = g_out.iter().zip(&self.w).map(|(g, w)| g * act + lam * d1 * w / det).collect();
        let mut g_w: Vec<f64> = input.iter().zip(u_hat).map(|(z, u)| g_pre * z + lam * d1 * u / det).collect();

        // chain through û(u_raw, w)
        let norm2 = dot(&self.w, &self.w);
        let g_u_raw = if norm2 == 0.0 {
            g_uhat
        } else {
            let a = dot(&self.w, &self.u_raw);
            let (m, dm) = Self::correction(a);
            let gw_dot = dot(&g_uhat, &self.w);
            let scale = dm * gw_dot / norm2;
            for i in 0..self.dim {
                g_w[i] +=
                    scale * self.u_raw[i] + m * g_uhat[i] / norm2 - 2.0 * m * gw_dot * self.w[i] / (norm2 * norm2);
            }
            g_uhat.iter().zip(&self.w).map(|(g, w)| g + scale * w).collect()
        };
        PlanarGrads { input: g_in, w: g_w, u_raw: g_u_raw, b: g_pre }
    }
}
