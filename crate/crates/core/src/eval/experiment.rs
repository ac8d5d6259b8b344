use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{config_digest, EvalReport, HorizonMetrics, Metrics, Predictor, TrainedModel};
use crate::data::{Dataset, Split, SplitSpec, Window};
use crate::model::{Model, ModelConfig};
use crate::training::{mae, mse, train, worker_pool, History, TrainConfig};
use crate::{Error, Result};

/// Per-window MSE/MAE averaged over `windows`, evaluated on `workers`
/// threads and merged in window order.
pub fn evaluate(predictor: &dyn Predictor, windows: &[Window], workers: usize) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no windows to evaluate".into()));
    }
    let pool = worker_pool(workers.max(1))?;
    let per_window: Vec<(f64, f64)> = pool.install(|| {
        windows
            .par_iter()
            .map(|w| {
                let y = predictor.forecast(&w.lookback, w.target.rows())?;
                Ok((mse(&y, &w.target)?, mae(&y, &w.target)?))
            })
            .collect::<Result<_>>()
    })?;
    let n = per_window.len() as f64;
    Ok(Metrics {
        mse: per_window.iter().map(|m| m.0).sum::<f64>() / n,
        mae: per_window.iter().map(|m| m.1).sum::<f64>() / n,
        windows: per_window.len(),
    })
}

/// A model trained for one horizon.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub predictor: TrainedModel,
    pub history: History,
}

/// A dataset plus the model and training settings shared by every arm of
/// an ablation.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub dataset: &'a Dataset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub horizons: Vec<usize>,
    /// Anchor spacing of training windows.
    pub train_stride: usize,
    /// Anchor spacing of validation and test windows.
    pub eval_stride: usize,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    dataset: &'a str,
    split: SplitSpec,
    label: &'a str,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    horizons: &'a [usize],
    train_stride: usize,
    eval_stride: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(dataset: &'a Dataset, model: ModelConfig, train: TrainConfig, horizons: Vec<usize>) -> Self {
        Experiment {
            dataset,
            model,
            train,
            horizons,
            train_stride: 1,
            eval_stride: 1,
        }
    }

    pub fn digest(&self, label: &str, model: &ModelConfig) -> Result<String> {
        config_digest(&DigestInput {
            dataset: self.dataset.name(),
            split: self.dataset.split,
            label,
            model,
            train: &self.train,
            horizons: &self.horizons,
            train_stride: self.train_stride,
            eval_stride: self.eval_stride,
        })
    }

    pub fn windows(&self, model: &ModelConfig, split: Split, horizon: usize) -> Result<Vec<Window>> {
        let stride = if split == Split::Train { self.train_stride } else { self.eval_stride };
        self.dataset.windows(split, model.patch.lookback, horizon, stride)
    }

    /// Trains `model` (with its horizon replaced by `horizon`) from the
    /// experiment seed.
    pub fn fit(&self, model: &ModelConfig, horizon: usize) -> Result<FittedModel> {
        let mut cfg = model.clone();
        cfg.horizon = horizon;
        let net = Model::new(cfg.clone())?;
        let train_w = self.windows(&cfg, Split::Train, horizon)?;
        let val_w = self.windows(&cfg, Split::Val, horizon)?;
        let (params, history) = train(&net, net.init_params(self.train.seed), &train_w, &val_w, &self.train)?;
        Ok(FittedModel {
            predictor: TrainedModel { model: net, params },
            history,
        })
    }

    /// Trains and tests `model` at every horizon.
    pub fn run(&self, label: &str, model: &ModelConfig) -> Result<EvalReport> {
        if self.horizons.is_empty() {
            return Err(Error::Config("no horizons requested".into()));
        }
        let start = Instant::now();
        let mut rows = Vec::with_capacity(self.horizons.len());
        for &h in &self.horizons {
            let fitted = self.fit(model, h)?;
            let test = self.windows(model, Split::Test, h)?;
            let m = evaluate(&fitted.predictor, &test, self.train.workers)?;
            rows.push(HorizonMetrics {
                horizon: h,
                mse: m.mse,
                mae: m.mae,
                windows: m.windows,
            });
        }
        Ok(EvalReport::new(
            self.dataset.name(),
            label,
            self.digest(label, model)?,
            self.train.seed,
            rows,
            start.elapsed().as_secs_f64(),
        ))
    }

    /// Scores a fixed predictor (no training) at every horizon.
    pub fn baseline(&self, label: &str, predictor: &dyn Predictor) -> Result<EvalReport> {
        let start = Instant::now();
        let mut rows = Vec::with_capacity(self.horizons.len());
        for &h in &self.horizons {
            let test = self.windows(&self.model, Split::Test, h)?;
            let m = evaluate(predictor, &test, self.train.workers)?;
            rows.push(HorizonMetrics {
                horizon: h,
                mse: m.mse,
                mae: m.mae,
                windows: m.windows,
            });
        }
        Ok(EvalReport::new(
            self.dataset.name(),
            label,
            self.digest(label, &self.model)?,
            self.train.seed,
            rows,
            start.elapsed().as_secs_f64(),
        ))
    }
}
