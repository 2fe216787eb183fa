use crate::error::{Error, Result};
use crate::math::{Activation, RngState};

use super::{ConvFlowLayer, FlowStack, IafLayer, Layer, PlanarLayer, RevertLayer};

/// Layout of one ConvBlock: a shared kernel width and one dilation per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kernel: usize,
    pub dilations: Vec<usize>,
    pub activation: Activation,
}

impl Schedule {
    /// Two-dimensional targets: kernel 2, dilations 1 and 2, tanh.
    pub fn synthetic() -> Self {
        Self { kernel: 2, dilations: vec![1, 2], activation: Activation::Tanh }
    }

    /// 50-dimensional latent codes: kernel 5, dilations 1..32, leaky ReLU.
    pub fn dense50() -> Self {
        Self { kernel: 5, dilations: vec![1, 2, 4, 8, 16, 32], activation: Activation::LeakyRelu }
    }

    /// 100-dimensional latent codes: kernel 5, dilations 1..64, leaky ReLU.
    pub fn dense100() -> Self {
        Self { kernel: 5, dilations: vec![1, 2, 4, 8, 16, 32, 64], activation: Activation::LeakyRelu }
    }

    /// The canonical schedule for `dim`: the named ones for 2, 50 and 100,
    /// otherwise kernel 5 with dilations `1, 2, 4, ...` below `dim`.
    pub fn for_dim(dim: usize) -> Self {
        match dim {
            2 => Self::synthetic(),
            50 => Self::dense50(),
            100 => Self::dense100(),
            _ => {
                let dilations =
                    std::iter::successors(Some(1usize), |r| Some(r * 2)).take_while(|r| *r < dim.max(2)).collect();
                Self { kernel: 5, dilations, activation: Activation::LeakyRelu }
            }
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }
}

/// One ConvFlow layer per dilation, freshly initialized from `rng`.
pub fn build_convblock(dim: usize, schedule: &Schedule, rng: &mut RngState) -> Result<Vec<Layer>> {
    if schedule.dilations.is_empty() {
        return Err(Error::invalid("a ConvBlock needs at least one dilation"));
    }
    schedule
        .dilations
        .iter()
        .map(|&r| {
            let mut layer = ConvFlowLayer::new(dim, schedule.kernel, r, schedule.activation)?;
            layer.init(rng);
            Ok(Layer::ConvFlow(layer))
        })
        .collect()
}

/// `blocks` repetitions of ConvBlock followed by a Revert layer.
pub fn build_model(dim: usize, blocks: usize, schedule: &Schedule, rng: &mut RngState) -> Result<FlowStack> {
    if blocks == 0 {
        return Err(Error::invalid("need at least one block"));
    }
    let mut layers = Vec::with_capacity(blocks * (schedule.dilations.len() + 1));
    for _ in 0..blocks {
        layers.extend(build_convblock(dim, schedule, rng)?);
        layers.push(Layer::Revert(RevertLayer::new(dim)));
    }
    FlowStack::new(dim, layers)
}

pub fn planar_stack(dim: usize, n_layers: usize, rng: &mut RngState) -> Result<FlowStack> {
    let layers = (0..n_layers)
        .map(|_| {
            let mut l = PlanarLayer::new(dim, Activation::Tanh)?;
            l.init(rng);
            Ok(Layer::Planar(l))
        })
        .collect::<Result<Vec<_>>>()?;
    FlowStack::new(dim, layers)
}

pub fn iaf_stack(dim: usize, n_layers: usize, hidden: usize, rng: &mut RngState) -> Result<FlowStack> {
    let layers = (0..n_layers)
        .map(|_| {
            let mut l = IafLayer::new(dim, hidden)?;
            l.init(rng);
            Ok(Layer::Iaf(l))
        })
        .collect::<Result<Vec<_>>>()?;
    FlowStack::new(dim, layers)
}
