use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::math::{AdamState, RngState, DEFAULT_LR};

use super::{kl_loss_grad, Energy, KlLossReport};

/// Base samples for training are drawn from this stream of the seed, so they
/// never overlap the stream used to initialize parameters.
pub const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 20_000, batch: 100, lr: DEFAULT_LR, seed: 0, log_every: 100 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log interval must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    /// 1-based step at which the report was measured (before that step's update).
    pub step: usize,
    pub report: KlLossReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Reports at step 1, every `log_every` steps, and the final step.
    pub records: Vec<TrainRecord>,
    /// Batch loss of every step.
    pub losses: Vec<f64>,
}

impl TrainHistory {
    /// Mean batch loss over the first `window` steps.
    pub fn initial_loss(&self, window: usize) -> f64 {
        mean(&self.losses[..window.clamp(1, self.losses.len())])
    }

    /// Mean batch loss over the last `window` steps.
    pub fn smoothed_final_loss(&self, window: usize) -> f64 {
        let n = self.losses.len();
        mean(&self.losses[n - window.clamp(1, n)..])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn train(stack: &mut FlowStack, energy: Energy, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_with(stack, energy, cfg, |_| {})
}

/// Like [`train`], calling `on_record` for each logged record as it is produced.
pub fn train_with<F>(stack: &mut FlowStack, energy: Energy, cfg: &TrainConfig, mut on_record: F) -> Result<TrainHistory>
where
    F: FnMut(&TrainRecord),
{
    cfg.validate()?;
    let mut rng = RngState::with_stream(cfg.seed, TRAIN_STREAM);
    let mut params = stack.param_vector();
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut history = TrainHistory { records: Vec::new(), losses: Vec::with_capacity(cfg.steps) };

    for step in 1..=cfg.steps {
        let batch: Vec<Vec<f64>> = (0..cfg.batch).map(|_| rng.sample_standard_gaussian(stack.dim())).collect();
        let (report, grad) = match kl_loss_grad(stack, energy, &batch) {
            Err(Error::InvariantViolation { .. }) if step > 1 => {
                return Err(Error::Diverged { step, loss: f64::NAN });
            }
            other => other?,
        };
        if !report.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step, loss: report.loss });
        }
        history.losses.push(report.loss);
        if step == 1 || step % cfg.log_every == 0 || step == cfg.steps {
            let record = TrainRecord { step, report };
            on_record(&record);
            history.records.push(record);
        }
        adam.step(&mut params, &grad)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step, loss: report.loss });
        }
        stack.load_params(&params)?;
    }
    Ok(history)
}
