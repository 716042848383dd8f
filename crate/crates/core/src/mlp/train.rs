use serde::{Deserialize, Serialize};

use super::model::{grad, mse, MlpModel};
use super::optim::{Optimizer, OptimizerKind};
use crate::numerics::RandomSource;
use crate::synth::LabeledSet;
use crate::{Error, Result};

/// Optimization schedule shared by MLP and GNN training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            decay_factor: 0.5,
            decay_every: 50,
            batch_size: 64,
            weight_decay: 1e-5,
            epochs: 250,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        if self.decay_every == 0 {
            return Err(Error::InvalidArgument("decay interval must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight decay must be >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Per-epoch losses and the selected epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 0 means the initial weights were never beaten.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub diverged: bool,
}

/// Trains with minibatches and keeps the weights of the best-validation epoch.
///
/// On a non-finite loss training stops, `diverged` is set and the best finite
/// snapshot seen so far is returned.
pub fn train(
    model: &MlpModel,
    train_set: &LabeledSet,
    val_set: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(MlpModel, History)> {
    cfg.validate()?;
    for (name, s) in [("train", train_set), ("validation", val_set)] {
        if s.dim() != model.in_dim() {
            return Err(Error::Dimension(format!(
                "{name} set has dimension {} but model expects {}",
                s.dim(),
                model.in_dim()
            )));
        }
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    let mut current = model.clone();
    let mut best = model.clone();
    let initial_val = mse(model, &val_set.inputs, &val_set.labels)?;
    let mut history = History {
        best_val_loss: if initial_val.is_finite() { initial_val } else { f64::INFINITY },
        ..History::default()
    };
    let mut opt = Optimizer::new(cfg.optimizer, cfg.weight_decay);
    let mut rng = RandomSource::new(cfg.seed, "mlp-shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        rng.shuffle(&mut order);
        let mut diverged = false;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train_set.inputs.select_rows(chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, g) = match grad(&current, &xb, &yb) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            opt.step(current.params_mut(), g.slices(), lr);
        }
        let train_loss = if diverged { f64::NAN } else { mse(&current, &train_set.inputs, &train_set.labels)? };
        let val_loss = if diverged { f64::NAN } else { mse(&current, &val_set.inputs, &val_set.labels)? };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if !train_loss.is_finite() || !val_loss.is_finite() || !current.is_finite() {
            history.diverged = true;
            break;
        }
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch + 1;
            best = current.clone();
        }
    }
    Ok((best, history))
}
