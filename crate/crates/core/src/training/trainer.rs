use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mse, Adam};
use crate::data::Window;
use crate::model::{ForwardCtx, Model};
use crate::numerics::{derive_seed, Graph, ParamStore, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Threads used for per-window gradients and validation. Results do
    /// not depend on this.
    pub workers: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            lr: 1e-4,
            patience: 3,
            seed: 0,
            workers: 1,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.workers == 0 {
            return Err(Error::Config("batch_size and workers must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be a non-negative number, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Mean loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl History {
    pub fn best_val(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_loss)
    }
}

type Grads = Vec<(String, Vec<f32>)>;

fn window_grads(model: &Model, store: &ParamStore<f32>, w: &Window, seed: u64) -> Result<(f64, Grads)> {
    let mut g = Graph::new();
    let mut ctx = ForwardCtx::train(Rng::new(seed));
    let loss = model.loss(&mut g, store, &w.lookback, &w.target, &mut ctx)?;
    g.backward(loss)?;
    Ok((g.scalar(loss) as f64, g.param_grads()))
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

/// Mean per-window forecast MSE in evaluation mode.
fn validation_mse(
    model: &Model,
    store: &ParamStore<f32>,
    windows: &[Window],
    pool: &rayon::ThreadPool,
) -> Result<f64> {
    let losses: Vec<f64> = pool.install(|| {
        windows
            .par_iter()
            .map(|w| mse(&model.predict(store, &w.lookback)?, &w.target))
            .collect::<Result<_>>()
    })?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Minimizes MSE over `train_windows` with Adam, evaluating on
/// `val_windows` after each epoch. Returns the parameters with the lowest
/// validation loss.
///
/// Window order is reshuffled each epoch from `config.seed`; per-window
/// gradients are summed in batch order, so the result is the same for any
/// number of workers.
pub fn train(
    model: &Model,
    init: ParamStore<f32>,
    train_windows: &[Window],
    val_windows: &[Window],
    config: &TrainConfig,
) -> Result<(ParamStore<f32>, History)> {
    config.validate()?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(Error::InvalidArgument("training needs train and validation windows".into()));
    }
    let pool = worker_pool(config.workers)?;
    let mut store = init;
    let mut best = store.clone();
    let mut best_val = f64::INFINITY;
    let mut history = History::default();
    let mut adam = Adam::new(config.lr);
    let mut waited = 0;
    let mut batch_index = 0usize;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    'epochs: for epoch in 0..config.epochs {
        Rng::new(derive_seed(config.seed, &[epoch as u64])).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            if config.max_steps.is_some_and(|m| history.step_losses.len() >= m) {
                break;
            }
            let results: Vec<Result<(f64, Grads)>> = pool.install(|| {
                batch
                    .par_iter()
                    .enumerate()
                    .map(|(i, &w)| {
                        let seed = derive_seed(config.seed, &[epoch as u64, b as u64, i as u64]);
                        window_grads(model, &store, &train_windows[w], seed)
                    })
                    .collect()
            });
            store.zero_grads();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, grads) = r.map_err(|e| match e {
                    Error::NonFinite { .. } => Error::NonFiniteLoss { batch: Some(batch_index) },
                    other => other,
                })?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { batch: Some(batch_index) });
                }
                batch_loss += loss;
                for (name, g) in grads {
                    store.accumulate_grad(&name, &g)?;
                }
            }
            store.scale_grads(1.0 / batch.len() as f32);
            adam.step(&mut store);
            if !store.all_finite() {
                return Err(Error::NonFiniteLoss { batch: Some(batch_index) });
            }
            epoch_loss += batch_loss;
            seen += batch.len();
            history.step_losses.push(batch_loss / batch.len() as f64);
            batch_index += 1;
        }
        if seen == 0 {
            break;
        }
        let val_loss = validation_mse(model, &store, val_windows, &pool)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / seen as f64,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = store.clone();
            history.best_epoch = Some(history.epochs.len() - 1);
            waited = 0;
        } else {
            waited += 1;
            if waited >= config.patience {
                history.stopped_early = true;
                break 'epochs;
            }
        }
    }
    if history.best_epoch.is_none() {
        best = store;
    }
    best.zero_grads();
    Ok((best, history))
}
