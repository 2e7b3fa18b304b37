//! Local training: seeded per-epoch reshuffle, Adam over mini-batches,
//! validation-loss early stopping.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::models::{loss_and_gradients, Model, ModelConfig, SequenceBatch};
use crate::nn::{adam_step, AdamConfig, AdamState, ParameterSet};
use crate::seed::{derive_seed, rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 2e-4,
            max_epochs: 500,
            patience: Some(15),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be >= 1 when early stopping is enabled".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss; `None` without validation data.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, opt(e.val_loss), opt(e.val_acc));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_params: ParameterSet,
    /// Weights at the best validation epoch (the final weights when there is
    /// no validation data or no epoch ran).
    pub best_params: ParameterSet,
    pub trace: TrainTrace,
}

/// Order in which an epoch visits the training windows.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(derive_seed(seed, &[stream::SHUFFLE, epoch as u64])));
    order
}

/// Trains from `params` on `train`, optionally early-stopping on `val`.
pub fn train_local(
    model: &ModelConfig,
    params: ParameterSet,
    train: &[WindowSample],
    val: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.check_params(&params)?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val.is_empty() && config.patience.is_some() {
        return Err(Error::Config(
            "early stopping needs a non-empty validation set".into(),
        ));
    }
    let mut params = params;
    let mut state = AdamState::new(&params, config.adam());
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, ParameterSet)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        let order = epoch_order(train.len(), config.seed, epoch);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = SequenceBatch::from_windows(chunk.iter().map(|&i| &train[i]))?;
            let at = |e: Error| match e {
                Error::NumericHealth(m) => {
                    Error::NumericHealth(format!("epoch {epoch}, batch {}: {m}", b + 1))
                }
                other => other,
            };
            let (loss, grads) = loss_and_gradients(model, &params, &batch).map_err(at)?;
            if !loss.is_finite() {
                return Err(Error::NumericHealth(format!(
                    "epoch {epoch}, batch {}: loss is {loss}",
                    b + 1
                )));
            }
            grads.as_params().ensure_finite().map_err(at)?;
            adam_step(&mut params, &grads, &mut state)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let current = Model {
                config: *model,
                params: params.clone(),
            };
            let r = evaluate(&current, val)?;
            (Some(r.loss), Some(r.accuracy))
        };
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:?} acc {val_acc:?}");
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });

        if let Some(vl) = val_loss {
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, params.clone()));
                trace.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
            }
            if config.patience.is_some_and(|p| since_best >= p) {
                trace.stopped_early = true;
                break;
            }
        }
    }
    let best_params = best.map(|(_, p)| p).unwrap_or_else(|| params.clone());
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        trace,
    })
}
