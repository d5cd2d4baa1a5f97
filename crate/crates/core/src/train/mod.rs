//! MAE training with Adam and early stopping on validation MAE.

mod adam;
mod checkpoint;

pub use adam::{clip_global_norm, global_norm, Adam};
pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, ensure_compatible, load_checkpoint,
    load_checkpoint_for, save_checkpoint, CheckpointError, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_windows, Subset, TimeSeriesDataset, WindowSample};
use crate::model::{ModelError, PatchDecomp};
use crate::numerics::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no {0} windows: the subset is shorter than the horizon or lacks lookback history")]
    NoWindows(&'static str),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn default_lr() -> f64 {
    1e-3
}
fn default_max_epochs() -> usize {
    200
}
fn default_patience() -> usize {
    10
}
fn default_one() -> usize {
    1
}
fn default_windows_batch() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Series per batch. With a single target series this has no effect.
    #[serde(default = "default_one")]
    pub batch_size: usize,
    /// Windows per optimizer step.
    #[serde(default = "default_windows_batch")]
    pub windows_batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Stride between training windows.
    #[serde(default = "default_one")]
    pub train_stride: usize,
    /// Stride between validation windows; the horizon when absent.
    #[serde(default)]
    pub valid_stride: Option<usize>,
    /// Global-norm gradient clipping, off when absent.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Caps optimizer steps per epoch, all windows when absent.
    #[serde(default)]
    pub max_steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.windows_batch_size == 0 || self.batch_size == 0 {
            return fail("batch sizes must be at least 1");
        }
        if self.train_stride == 0 || self.valid_stride == Some(0) {
            return fail("strides must be at least 1");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return fail("clip_norm must be positive");
        }
        if self.max_steps_per_epoch == Some(0) {
            return fail("max_steps_per_epoch must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub valid_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_mae: f64,
    pub stopped_early: bool,
    pub n_train_windows: usize,
    pub n_valid_windows: usize,
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    /// The report without timing, for reproducibility comparisons.
    pub fn metrics(&self) -> TrainReport {
        TrainReport {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }
}

/// `(1/H) * sum |y_hat - y|`
pub fn mae_loss(y_hat: &[f64], y: &[f64]) -> f64 {
    assert_eq!(y_hat.len(), y.len(), "mae_loss needs equal lengths");
    if y.is_empty() {
        return 0.0;
    }
    y_hat.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

fn diverged(epoch: usize, step: usize, e: ModelError) -> TrainError {
    match e {
        ModelError::Tensor(TensorError::NonFinite { op }) => TrainError::Diverged {
            epoch,
            step,
            detail: format!("non-finite value produced by `{op}`"),
        },
        other => TrainError::Model(other),
    }
}

/// Trains on the dataset's train subset, early stopping on its valid
/// subset.
pub fn train(
    model: PatchDecomp,
    ds: &TimeSeriesDataset,
    config: &TrainConfig,
) -> Result<(PatchDecomp, TrainReport), TrainError> {
    let (l, h) = (model.config.lookback, model.config.horizon);
    let train_w = make_windows(ds, l, h, config.train_stride, Subset::Train);
    let valid_w = make_windows(ds, l, h, config.valid_stride.unwrap_or(h), Subset::Valid);
    train_windows(model, &train_w, &valid_w, config)
}

pub fn train_windows(
    mut model: PatchDecomp,
    train_w: &[WindowSample],
    valid_w: &[WindowSample],
    config: &TrainConfig,
) -> Result<(PatchDecomp, TrainReport), TrainError> {
    config.validate()?;
    if train_w.is_empty() {
        return Err(TrainError::NoWindows("training"));
    }
    if valid_w.is_empty() {
        return Err(TrainError::NoWindows("validation"));
    }
    let started = Instant::now();
    let train_refs: Vec<&WindowSample> = train_w.iter().collect();
    let valid_refs: Vec<&WindowSample> = valid_w.iter().collect();
    let all = model.prepare(&train_refs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.lr, &model.params);
    let mut order: Vec<usize> = (0..train_w.len()).collect();

    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut chunks: Vec<&[usize]> = order.chunks(config.windows_batch_size).collect();
        if let Some(cap) = config.max_steps_per_epoch {
            chunks.truncate(cap);
        }
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for (step, idx) in chunks.into_iter().enumerate() {
            let batch = all.select(idx);
            let (loss, mut grads) = model
                .loss_and_grads(&batch, Some(&mut rng as &mut dyn RngCore))
                .map_err(|e| diverged(epoch, step, e))?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step,
                    detail: format!("loss is {loss}"),
                });
            }
            if let Some(c) = config.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            adam.step(&mut model.params, &grads);
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
        }
        let valid_mae = model
            .mae(&valid_refs)
            .map_err(|e| diverged(epoch, usize::MAX, e))?;
        if !valid_mae.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                step: usize::MAX,
                detail: "validation MAE is not finite".into(),
            });
        }
        let train_mae = loss_sum / seen as f64;
        log::info!("epoch {epoch}: train MAE {train_mae:.6}, valid MAE {valid_mae:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_mae,
            valid_mae,
        });
        if valid_mae < best.0 {
            best = (valid_mae, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }
    let (best_valid_mae, best_epoch, params) = best;
    model.params = params;
    let report = TrainReport {
        epochs,
        best_epoch,
        best_valid_mae,
        stopped_early,
        n_train_windows: train_w.len(),
        n_valid_windows: valid_w.len(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
