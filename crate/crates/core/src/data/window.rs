use std::ops::Range;

use super::{standardize, Series, Split, SplitSpec, Standardizer};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// One supervised example. `anchor` is the index of the first target row;
/// the lookback covers `anchor - L .. anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub anchor: usize,
    pub lookback: Tensor<f32>,
    pub target: Tensor<f32>,
}

/// Target start positions for a split occupying `range`. The lookback may
/// reach back before `range.start`; the target never leaves the range.
pub fn anchors(range: Range<usize>, lookback: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let first = range.start.max(lookback);
    if stride == 0 || horizon > range.end || first > range.end - horizon {
        return Vec::new();
    }
    (first..=range.end - horizon).step_by(stride).collect()
}

fn slice_rows(values: &Tensor<f32>, rows: Range<usize>) -> Tensor<f32> {
    let c = values.cols();
    Tensor::new(vec![rows.len(), c], values.data()[rows.start * c..rows.end * c].to_vec())
        .expect("row slice")
}

/// All windows of `values` whose target lies in `range`, in time order.
pub fn make_windows(
    values: &Tensor<f32>,
    range: Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if stride == 0 || lookback == 0 || horizon == 0 {
        return Err(Error::InvalidArgument(
            "lookback, horizon and stride must be positive".into(),
        ));
    }
    if range.end > values.rows() {
        return Err(Error::InvalidArgument(format!(
            "range {range:?} exceeds series length {}",
            values.rows()
        )));
    }
    let starts = anchors(range.clone(), lookback, horizon, stride);
    if starts.is_empty() {
        return Err(Error::EmptySplit {
            split: format!("{}..{}", range.start, range.end),
            len: range.len(),
            lookback,
            horizon,
        });
    }
    Ok(starts
        .into_iter()
        .map(|a| Window {
            anchor: a,
            lookback: slice_rows(values, a - lookback..a),
            target: slice_rows(values, a..a + horizon),
        })
        .collect())
}

/// A series standardized on its training split, ready for windowing.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: Series,
    pub scaler: Standardizer,
    pub split: SplitSpec,
}

impl Dataset {
    pub fn new(raw: &Series, split: SplitSpec) -> Result<Self> {
        split.validate()?;
        let [train_end, _] = split.boundaries(raw.len());
        let (series, scaler) = standardize(raw, train_end)?;
        Ok(Dataset { series, scaler, split })
    }

    pub fn name(&self) -> &str {
        &self.series.name
    }

    pub fn num_channels(&self) -> usize {
        self.series.num_channels()
    }

    pub fn range(&self, split: Split) -> Range<usize> {
        self.split.range(split, self.series.len())
    }

    pub fn windows(&self, split: Split, lookback: usize, horizon: usize, stride: usize) -> Result<Vec<Window>> {
        let range = self.range(split);
        make_windows(&self.series.values, range.clone(), lookback, horizon, stride).map_err(|e| match e {
            Error::EmptySplit { lookback, horizon, .. } => Error::EmptySplit {
                split: split.label().to_string(),
                len: range.len(),
                lookback,
                horizon,
            },
            other => other,
        })
    }
}
