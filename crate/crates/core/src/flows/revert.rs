use crate::error::{check_dim, Result};

/// Reverses the order of the coordinates. Parameter-free, log-det 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevertLayer {
    dim: usize,
}

impl RevertLayer {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dim, z.len())?;
        Ok((z.iter().rev().copied().collect(), 0.0))
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.forward(y).map(|(z, _)| z)
    }

    pub fn backward(&self, g_out: &[f64]) -> Vec<f64> {
        g_out.iter().rev().copied().collect()
    }
}
