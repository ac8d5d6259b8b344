use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::series::hourly_timestamps;
use super::Series;
use crate::numerics::{Rng, Tensor};
use crate::{Error, Result};

/// Sum-of-sinusoids corpus with Gaussian noise and a random phase per
/// channel and component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub noise: f64,
    pub length: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl SynthSpec {
    pub fn sinusoid(period: f64, noise: f64, length: usize, seed: u64) -> Self {
        SynthSpec {
            periods: vec![period],
            amplitudes: vec![1.0],
            noise,
            length,
            channels: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.len() != self.amplitudes.len() {
            return Err(Error::Config(format!(
                "{} periods but {} amplitudes",
                self.periods.len(),
                self.amplitudes.len()
            )));
        }
        if self.periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config("periods must be positive".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("noise must be a non-negative number".into()));
        }
        if self.length == 0 || self.channels == 0 {
            return Err(Error::Config("length and channels must be positive".into()));
        }
        Ok(())
    }
}

pub fn synth_series(spec: &SynthSpec) -> Result<Series> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let phases: Vec<Vec<f64>> = (0..spec.channels)
        .map(|_| spec.periods.iter().map(|_| rng.uniform() * TAU).collect())
        .collect();
    let mut data = Vec::with_capacity(spec.length * spec.channels);
    for t in 0..spec.length {
        for phase in &phases {
            let clean: f64 = spec
                .periods
                .iter()
                .zip(&spec.amplitudes)
                .zip(phase)
                .map(|((p, a), ph)| a * (TAU * t as f64 / p + ph).sin())
                .sum();
            data.push((clean + spec.noise * rng.normal()) as f32);
        }
    }
    let channels = (0..spec.channels).map(|c| format!("ch{c}")).collect();
    let mut series = Series::new(
        "synthetic",
        Tensor::new(vec![spec.length, spec.channels], data)?,
        channels,
    )?;
    series.timestamps = Some(hourly_timestamps(spec.length));
    Ok(series)
}
