use crate::model::{Model, ModelVariant};
use crate::numerics::{ParamStore, Tensor};
use crate::{Error, Result};

/// Anything that maps a `[L x C]` lookback to a `[horizon x C]` forecast.
pub trait Predictor: Sync {
    fn forecast(&self, lookback: &Tensor<f32>, horizon: usize) -> Result<Tensor<f32>>;
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub params: ParamStore<f32>,
}

impl Predictor for TrainedModel {
    fn forecast(&self, lookback: &Tensor<f32>, horizon: usize) -> Result<Tensor<f32>> {
        match self.model.variant() {
            ModelVariant::TimeExpert => {
                let h = self.model.config().horizon;
                if h != horizon {
                    return Err(Error::InvalidArgument(format!(
                        "model forecasts {h} steps, {horizon} requested"
                    )));
                }
                self.model.predict(&self.params, lookback)
            }
            ModelVariant::TimeExpertG => Ok(self.model.generate(&self.params, lookback, horizon)?.0),
        }
    }
}

/// Tiles the last `min(horizon, L)` observations forward.
#[derive(Debug, Clone, Copy, Default)]
pub struct RepeatLastWindow;

impl Predictor for RepeatLastWindow {
    fn forecast(&self, lookback: &Tensor<f32>, horizon: usize) -> Result<Tensor<f32>> {
        let (l, c) = (lookback.rows(), lookback.cols());
        if l == 0 {
            return Err(Error::InvalidShape("empty lookback".into()));
        }
        let m = horizon.min(l);
        let mut data = Vec::with_capacity(horizon * c);
        for t in 0..horizon {
            data.extend_from_slice(lookback.row(l - m + t % m));
        }
        Tensor::new(vec![horizon, c], data)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForecast;

impl Predictor for ZeroForecast {
    fn forecast(&self, lookback: &Tensor<f32>, horizon: usize) -> Result<Tensor<f32>> {
        Ok(Tensor::zeros(&[horizon, lookback.cols()]))
    }
}
