//! Model configuration and checkpoint documents (JSON).
//!
//! A [`ModelConfig`] lists the layers of a stack and its training settings. A
//! [`Checkpoint`] echoes the config and stores the flat parameter vector with
//! 17 significant digits, so that loading a saved model reproduces every
//! parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::flows::{default_hidden, ConvFlowLayer, FlowStack, IafLayer, Layer, PlanarLayer, RevertLayer, Schedule};
use crate::math::{Activation, RngState};
use crate::objectives::{Energy, TrainConfig};

pub const FORMAT_VERSION: u32 = 1;

/// Names accepted by [`ModelConfig::preset`].
pub const PRESETS: [&str; 3] = ["synthetic-k8", "dense-50", "dense-100"];

/// Number of ConvBlock+Revert repetitions in the `dense-*` presets.
pub const DENSE_PRESET_BLOCKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Convflow { kernel: usize, dilation: usize, activation: Activation },
    Revert,
    Planar { activation: Activation },
    Iaf { hidden: usize },
}

impl LayerSpec {
    /// A layer of this shape with all parameters zero.
    pub fn build(&self, dim: usize) -> Result<Layer> {
        Ok(match *self {
            LayerSpec::Convflow { kernel, dilation, activation } => {
                Layer::ConvFlow(ConvFlowLayer::new(dim, kernel, dilation, activation)?)
            }
            LayerSpec::Revert => Layer::Revert(RevertLayer::new(dim)),
            LayerSpec::Planar { activation } => Layer::Planar(PlanarLayer::new(dim, activation)?),
            LayerSpec::Iaf { hidden } => Layer::Iaf(IafLayer::new(dim, hidden)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self { steps: d.steps, batch: d.batch, lr: d.lr, seed: d.seed }
    }
}

impl TrainingSpec {
    pub fn to_train_config(self, log_every: usize) -> TrainConfig {
        TrainConfig { steps: self.steps, batch: self.batch, lr: self.lr, seed: self.seed, log_every }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub version: u32,
    pub dim: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub training: TrainingSpec,
}

impl ModelConfig {
    /// `blocks` repetitions of a ConvBlock following `schedule`, each
    /// followed by a Revert layer.
    pub fn convblocks(dim: usize, blocks: usize, schedule: &Schedule) -> Self {
        let mut layers = Vec::with_capacity(blocks * (schedule.dilations.len() + 1));
        for _ in 0..blocks {
            for &dilation in &schedule.dilations {
                layers.push(LayerSpec::Convflow { kernel: schedule.kernel, dilation, activation: schedule.activation });
            }
            layers.push(LayerSpec::Revert);
        }
        Self { version: FORMAT_VERSION, dim, layers, training: TrainingSpec::default() }
    }

    pub fn planar(dim: usize, n_layers: usize) -> Self {
        let layers = vec![LayerSpec::Planar { activation: Activation::Tanh }; n_layers];
        Self { version: FORMAT_VERSION, dim, layers, training: TrainingSpec::default() }
    }

    pub fn iaf(dim: usize, n_layers: usize) -> Self {
        let layers = vec![LayerSpec::Iaf { hidden: default_hidden(dim) }; n_layers];
        Self { version: FORMAT_VERSION, dim, layers, training: TrainingSpec::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthetic-k8" => Ok(Self::convblocks(2, 8, &Schedule::synthetic())),
            "dense-50" => Ok(Self::convblocks(50, DENSE_PRESET_BLOCKS, &Schedule::dense50())),
            "dense-100" => Ok(Self::convblocks(100, DENSE_PRESET_BLOCKS, &Schedule::dense100())),
            other => Err(Error::invalid(format!("unknown preset '{other}' (expected one of {})", PRESETS.join(", ")))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        if !(self.training.lr.is_finite() && self.training.lr > 0.0) {
            return Err(Error::invalid("training.lr must be positive and finite"));
        }
        if self.training.steps == 0 || self.training.batch == 0 {
            return Err(Error::invalid("training.steps and training.batch must be at least 1"));
        }
        self.zeroed_stack().map(|_| ())
    }

    /// The stack with every parameter zero. ConvFlow, planar and IAF layers
    /// are all the identity map at zero.
    pub fn zeroed_stack(&self) -> Result<FlowStack> {
        let layers = self.layers.iter().map(|s| s.build(self.dim)).collect::<Result<Vec<_>>>()?;
        FlowStack::new(self.dim, layers)
    }

    /// The stack with every layer freshly initialized from `rng`.
    pub fn init_stack(&self, rng: &mut RngState) -> Result<FlowStack> {
        let mut stack = self.zeroed_stack()?;
        for layer in stack.layers_mut() {
            layer.init(rng);
        }
        Ok(stack)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.zeroed_stack()?.param_count())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::preset("synthetic-k8").expect("built-in preset")
    }
}

/// A trained (or initialized) model: its config plus the flat parameter
/// vector in stack order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Energy>,
    #[serde(serialize_with = "serialize_params")]
    pub params: Vec<f64>,
    #[serde(default)]
    pub final_loss: Option<f64>,
}

fn serialize_params<S: Serializer>(params: &[f64], serializer: S) -> std::result::Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format_reals(params)).map_err(serde::ser::Error::custom)?;
    raw.serialize(serializer)
}

/// JSON array of reals with 17 significant digits each.
fn format_reals(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 25 + 2);
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").expect("writing to a String");
    }
    out.push(']');
    out
}

impl Checkpoint {
    pub fn from_stack(
        config: &ModelConfig,
        stack: &FlowStack,
        energy: Option<Energy>,
        final_loss: Option<f64>,
    ) -> Result<Self> {
        let reference = config.zeroed_stack()?;
        if reference.param_count() != stack.param_count() || reference.dim() != stack.dim() {
            return Err(Error::invalid("stack does not match the config"));
        }
        let checkpoint = Self {
            version: FORMAT_VERSION,
            config: config.clone(),
            energy,
            params: stack.param_vector(),
            final_loss: final_loss.filter(|l| l.is_finite()),
        };
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        let expected = self.config.param_count()?;
        if self.params.len() != expected {
            return Err(Error::invalid(format!(
                "checkpoint has {} parameters, config needs {expected}",
                self.params.len()
            )));
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    pub fn stack(&self) -> Result<FlowStack> {
        let mut stack = self.config.zeroed_stack()?;
        stack.load_params(&self.params)?;
        Ok(stack)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let checkpoint: Self = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Format { path: path.into(), message: e.to_string() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_sizes() {
        let synthetic = ModelConfig::preset("synthetic-k8").unwrap();
        assert_eq!(synthetic.layers.len(), 24);
        assert_eq!(synthetic.param_count().unwrap(), 64);
        let dense = ModelConfig::preset("dense-50").unwrap();
        assert_eq!(dense.param_count().unwrap(), DENSE_PRESET_BLOCKS * 330);
        let dense = ModelConfig::preset("dense-100").unwrap();
        assert_eq!(dense.param_count().unwrap(), DENSE_PRESET_BLOCKS * 7 * 105);
        assert!(ModelConfig::preset("huge").is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut config = ModelConfig::planar(3, 2);
        config.layers.push(LayerSpec::Iaf { hidden: 8 });
        config.layers.push(LayerSpec::Revert);
        let back = ModelConfig::from_json(&config.to_json()).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn layer_descriptor_format() {
        let text = r#"{"version":1,"dim":2,"layers":[
            {"kind":"convflow","kernel":2,"dilation":1,"activation":"tanh"},
            {"kind":"revert"},
            {"kind":"planar","activation":"tanh"},
            {"kind":"iaf","hidden":16}],
            "training":{"steps":10,"batch":4,"lr":0.001,"seed":3}}"#;
        let config = ModelConfig::from_json(text).unwrap();
        assert_eq!(config.layers.len(), 4);
        assert_eq!(config.training.seed, 3);
        assert_eq!(config.param_count().unwrap(), 4 + 5 + (3 * 16 * 2 + 16 + 4));
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_version = r#"{"version":2,"dim":2,"layers":[{"kind":"revert"}]}"#;
        assert!(ModelConfig::from_json(bad_version).is_err());
        let empty = r#"{"version":1,"dim":2,"layers":[]}"#;
        assert!(ModelConfig::from_json(empty).is_err());
        let bad_kind = r#"{"version":1,"dim":2,"layers":[{"kind":"mystery"}]}"#;
        assert!(ModelConfig::from_json(bad_kind).is_err());
        let zero_kernel =
            r#"{"version":1,"dim":2,"layers":[{"kind":"convflow","kernel":0,"dilation":1,"activation":"tanh"}]}"#;
        assert!(ModelConfig::from_json(zero_kernel).is_err());
    }

    #[test]
    fn checkpoint_params_are_bit_exact() {
        let config = ModelConfig::preset("synthetic-k8").unwrap();
        let mut rng = RngState::new(9);
        let stack = config.init_stack(&mut rng).unwrap();
        let ckpt = Checkpoint::from_stack(&config, &stack, Some(Energy::U1), Some(-1.25)).unwrap();
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.params.iter().zip(&stack.param_vector()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn checkpoint_uses_seventeen_digits() {
        let config = ModelConfig::convblocks(2, 1, &Schedule::synthetic());
        let mut stack = config.zeroed_stack().unwrap();
        let mut params = vec![0.0; stack.param_count()];
        params[0] = 0.1;
        stack.load_params(&params).unwrap();
        let json = Checkpoint::from_stack(&config, &stack, None, None).unwrap().to_json();
        assert!(json.contains("1.0000000000000001e-1"), "{json}");
    }

    #[test]
    fn checkpoint_rejects_wrong_length() {
        let config = ModelConfig::convblocks(2, 1, &Schedule::synthetic());
        let text = format!(r#"{{"version":1,"config":{},"params":[0.0],"final_loss":null}}"#, config.to_json());
        assert!(Checkpoint::from_json(&text).is_err());
    }
}
