use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::Series;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Floor applied to per-channel standard deviations.
pub const STD_EPS: f64 = 1e-5;

/// Per-channel z-scoring fitted on one range of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation of each channel over `range`.
    pub fn fit(values: &Tensor<f32>, range: Range<usize>) -> Result<Self> {
        if range.is_empty() || range.end > values.rows() {
            return Err(Error::InvalidArgument(format!(
                "cannot fit statistics on rows {range:?} of a {}-row series",
                values.rows()
            )));
        }
        let n = range.len() as f64;
        let c = values.cols();
        let mut mean = vec![0.0; c];
        for t in range.clone() {
            for (m, v) in mean.iter_mut().zip(values.row(t)) {
                *m += *v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for t in range {
            for ((s, v), m) in var.iter_mut().zip(values.row(t)).zip(&mean) {
                *s += (*v as f64 - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_EPS)).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, values: &Tensor<f32>) -> Tensor<f32> {
        self.map(values, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, values: &Tensor<f32>) -> Tensor<f32> {
        self.map(values, |v, m, s| v * s + m)
    }

    fn map(&self, values: &Tensor<f32>, f: impl Fn(f64, f64, f64) -> f64) -> Tensor<f32> {
        let c = self.mean.len();
        let data = values
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| f(*v as f64, self.mean[i % c], self.std[i % c]) as f32)
            .collect();
        Tensor::new(values.shape().to_vec(), data).expect("shape preserved")
    }
}

/// Z-scores every channel with statistics from rows `0..train_end`.
pub fn standardize(series: &Series, train_end: usize) -> Result<(Series, Standardizer)> {
    let scaler = Standardizer::fit(&series.values, 0..train_end)?;
    Ok((series.with_values(scaler.apply(&series.values)), scaler))
}
