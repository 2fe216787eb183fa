use crate::error::{check_dim, Error, Result};

use super::{Layer, LayerCache};

/// An ordered composition of layers sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    dim: usize,
    layers: Vec<Layer>,
}

/// Per-layer caches and log-determinants of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub caches: Vec<LayerCache>,
    pub logdets: Vec<f64>,
    pub total_logdet: f64,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StackGrads {
    pub input: Vec<f64>,
    /// Aligned with [`FlowStack::param_vector`].
    pub params: Vec<f64>,
}

impl FlowStack {
    pub fn new(dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if layers.is_empty() {
            return Err(Error::invalid("a flow stack needs at least one layer"));
        }
        for layer in &layers {
            check_dim(dim, layer.dim())?;
        }
        Ok(Self { dim, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn is_invertible(&self) -> bool {
        self.layers.iter().all(Layer::is_invertible)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters, layer by layer in stack order.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn load_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.param_count(), params.len())?;
        let mut offset = 0;
        for layer in &mut self.layers {
            let n = layer.param_count();
            layer.read_params(&params[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    pub fn forward(&self, z0: &[f64]) -> Result<ForwardTrace> {
        check_dim(self.dim, z0.len())?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut logdets = Vec::with_capacity(self.layers.len());
        let mut total_logdet = 0.0;
        let mut z = z0.to_vec();
        for layer in &self.layers {
            let step = layer.forward(&z)?;
            total_logdet += step.logdet;
            logdets.push(step.logdet);
            caches.push(step.cache);
            z = step.output;
        }
        Ok(ForwardTrace { caches, logdets, total_logdet, output: z })
    }

    /// Output and total log-determinant without keeping caches around.
    pub fn transform(&self, z0: &[f64]) -> Result<(Vec<f64>, f64)> {
        let trace = self.forward(z0)?;
        Ok((trace.output, trace.total_logdet))
    }

    /// Fails with [`Error::NotInvertible`] if any layer lacks an inverse.
    pub fn inverse(&self, zk: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, zk.len())?;
        if let Some(layer) = self.layers.iter().find(|l| !l.is_invertible()) {
            return Err(Error::NotInvertible(layer.kind()));
        }
        let mut z = zk.to_vec();
        for layer in self.layers.iter().rev() {
            z = layer.inverse(&z)?;
        }
        Ok(z)
    }

    /// Gradients of `⟨g_out, zK⟩ + lam · total_logdet` w.r.t. `z0` and all parameters.
    pub fn backward(&self, trace: &ForwardTrace, g_out: &[f64], lam: f64) -> StackGrads {
        let mut params = vec![0.0; self.param_count()];
        let mut end = params.len();
        let mut g = g_out.to_vec();
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            let grads = layer.backward(cache, &g, lam);
            let start = end - grads.params.len();
            params[start..end].copy_from_slice(&grads.params);
            end = start;
            g = grads.input;
        }
        StackGrads { input: g, params }
    }
}
