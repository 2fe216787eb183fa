//! Invertible layers and their composition.
//!
//! Every layer exposes a forward pass returning its log-determinant and a
//! cache, and a backward pass for the scalar
//! `⟨g_out, f(z)⟩ + lam · logdet(z)`. Parameters are flattened in a fixed
//! order (see [`Layer::write_params`]) so a whole stack can be driven by a
//! single optimizer vector.

mod builder;
mod conv;
mod iaf;
mod planar;
mod revert;
pub(crate) mod solve;
mod stack;

pub use builder::{build_convblock, build_model, iaf_stack, planar_stack, Schedule};
pub use conv::{conv1d, effective_scale, raw_for_scale, ConvFlowCache, ConvFlowGrads, ConvFlowLayer};
pub use iaf::{default_hidden, IafCache, IafGrads, IafLayer, LOG_SCALE_CLAMP};
pub use planar::{PlanarCache, PlanarGrads, PlanarLayer};
pub use revert::RevertLayer;
pub use stack::{FlowStack, ForwardTrace, StackGrads};

use crate::error::{Error, Result};
use crate::math::RngState;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    ConvFlow(ConvFlowLayer),
    Revert(RevertLayer),
    Planar(PlanarLayer),
    Iaf(IafLayer),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    ConvFlow(ConvFlowCache),
    Revert,
    Planar(PlanarCache),
    Iaf(IafCache),
}

/// Result of a single layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub output: Vec<f64>,
    pub logdet: f64,
    pub cache: LayerCache,
}

/// Input gradient and parameter gradient (in [`Layer::write_params`] order).
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub input: Vec<f64>,
    pub params: Vec<f64>,
}

impl Layer {
    pub fn dim(&self) -> usize {
        match self {
            Layer::ConvFlow(l) => l.dim(),
            Layer::Revert(l) => l.dim(),
            Layer::Planar(l) => l.dim(),
            Layer::Iaf(l) => l.dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::ConvFlow(_) => "convflow",
            Layer::Revert(_) => "revert",
            Layer::Planar(_) => "planar",
            Layer::Iaf(_) => "iaf",
        }
    }

    pub fn is_invertible(&self) -> bool {
        matches!(self, Layer::ConvFlow(_) | Layer::Revert(_))
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::ConvFlow(l) => l.param_count(),
            Layer::Revert(_) => 0,
            Layer::Planar(l) => l.param_count(),
            Layer::Iaf(l) => l.param_count(),
        }
    }

    /// Appends parameters: convflow `kernel, u_raw`; planar `w, u_raw, b`;
    /// iaf `w_in, b_in, w_shift, b_shift, w_log_scale, b_log_scale`.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            Layer::ConvFlow(l) => {
                out.extend(&l.kernel);
                out.extend(&l.u_raw);
            }
            Layer::Revert(_) => {}
            Layer::Planar(l) => {
                out.extend(&l.w);
                out.extend(&l.u_raw);
                out.push(l.b);
            }
            Layer::Iaf(l) => {
                for p in l.params() {
                    out.extend(p);
                }
            }
        }
    }

    /// Inverse of [`Layer::write_params`]; `src` must hold exactly `param_count()` values.
    pub fn read_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), actual: src.len() });
        }
        let mut rest = src;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        match self {
            Layer::ConvFlow(l) => {
                take(&mut l.kernel);
                take(&mut l.u_raw);
            }
            Layer::Revert(_) => {}
            Layer::Planar(l) => {
                take(&mut l.w);
                take(&mut l.u_raw);
                let mut b = [0.0];
                take(&mut b);
                l.b = b[0];
            }
            Layer::Iaf(l) => {
                for p in l.params_mut() {
                    take(p);
                }
            }
        }
        Ok(())
    }

    /// Default random initialization of each layer kind.
    pub fn init(&mut self, rng: &mut RngState) {
        match self {
            Layer::ConvFlow(l) => l.init(rng),
            Layer::Revert(_) => {}
            Layer::Planar(l) => l.init(rng),
            Layer::Iaf(l) => l.init(rng),
        }
    }

    /// Sets every parameter to an independent `N(0, std²)` draw.
    pub fn randomize(&mut self, rng: &mut RngState, std: f64) {
        let params: Vec<f64> = (0..self.param_count()).map(|_| rng.normal(0.0, std)).collect();
        self.read_params(&params).expect("length matches param_count");
    }

    pub fn forward(&self, z: &[f64]) -> Result<LayerOutput> {
        let (output, logdet, cache) = match self {
            Layer::ConvFlow(l) => {
                let (o, ld, c) = l.forward(z)?;
                (o, ld, LayerCache::ConvFlow(c))
            }
            Layer::Revert(l) => {
                let (o, ld) = l.forward(z)?;
                (o, ld, LayerCache::Revert)
            }
            Layer::Planar(l) => {
                let (o, ld, c) = l.forward(z)?;
                (o, ld, LayerCache::Planar(c))
            }
            Layer::Iaf(l) => {
                let (o, ld, c) = l.forward(z)?;
                (o, ld, LayerCache::Iaf(c))
            }
        };
        Ok(LayerOutput { output, logdet, cache })
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Layer::ConvFlow(l) => l.inverse(y),
            Layer::Revert(l) => l.inverse(y),
            Layer::Planar(_) => Err(Error::NotInvertible("planar")),
            Layer::Iaf(_) => Err(Error::NotInvertible("iaf")),
        }
    }

    /// # Panics
    /// If `cache` was produced by a different layer kind.
    pub fn backward(&self, cache: &LayerCache, g_out: &[f64], lam: f64) -> LayerGrads {
        match (self, cache) {
            (Layer::ConvFlow(l), LayerCache::ConvFlow(c)) => {
                let g = l.backward(c, g_out, lam);
                let mut params = g.kernel;
                params.extend(g.u_raw);
                LayerGrads { input: g.input, params }
            }
            (Layer::Revert(l), LayerCache::Revert) => LayerGrads { input: l.backward(g_out), params: Vec::new() },
            (Layer::Planar(l), LayerCache::Planar(c)) => {
                let g = l.backward(c, g_out, lam);
                let mut params = g.w;
                params.extend(g.u_raw);
                params.push(g.b);
                LayerGrads { input: g.input, params }
            }
            (Layer::Iaf(l), LayerCache::Iaf(c)) => {
                let g = l.backward(c, g_out, lam);
                LayerGrads { input: g.input, params: g.params }
            }
            _ => panic!("cache does not belong to a {} layer", self.kind()),
        }
    }
}
