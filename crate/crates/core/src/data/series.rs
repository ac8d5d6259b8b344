use std::path::Path;

use chrono::{NaiveDate, TimeDelta};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// A multivariate series stored time-major as a `[T, C]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Tensor<f32>,
    pub timestamps: Option<Vec<String>>,
    pub channels: Vec<String>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Tensor<f32>, channels: Vec<String>) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::InvalidShape(format!(
                "series values must be [T, C], got {:?}",
                values.shape()
            )));
        }
        if channels.len() != values.cols() {
            return Err(Error::InvalidShape(format!(
                "{} channel names for {} columns",
                channels.len(),
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::InvalidArgument("series contains non-finite values".into()));
        }
        Ok(Series {
            name: name.into(),
            values,
            timestamps: None,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.values.cols()
    }

    /// Same metadata, different values of the same shape.
    pub fn with_values(&self, values: Tensor<f32>) -> Series {
        debug_assert_eq!(values.shape(), self.values.shape());
        Series {
            name: self.name.clone(),
            values,
            timestamps: self.timestamps.clone(),
            channels: self.channels.clone(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim().to_ascii_lowercase();
    matches!(c.as_str(), "" | "na" | "n/a" | "nan" | "null" | "none")
}

/// Reads an ETT-style CSV: a header row, a leading `date` column and one
/// numeric column per channel. Line and column numbers in errors are
/// 1-based and count the header as line 1.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Series> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: header.len().max(1),
            message: "expected a date column followed by at least one channel".into(),
        });
    }
    let channels: Vec<String> = header.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        timestamps.push(record[0].to_string());
        for (j, cell) in record.iter().enumerate().skip(1) {
            if is_missing(cell) {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("missing value {cell:?}"),
                });
            }
            let value: f32 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                line,
                column: j + 1,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(value);
        }
    }
    let rows = timestamps.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut series = Series::new(name, Tensor::new(vec![rows, channels.len()], data)?, channels)?;
    series.timestamps = Some(timestamps);
    Ok(series)
}

/// Hourly timestamps starting at midnight on 2016-07-01, the ETT convention.
pub(crate) fn hourly_timestamps(n: usize) -> Vec<String> {
    let start = NaiveDate::from_ymd_opt(2016, 7, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    (0..n)
        .map(|i| (start + TimeDelta::hours(i as i64)).format("%Y-%m-%d %H:%M:%S").to_string())
        .collect()
}

/// Writes `series` in the format [`load_csv`] reads. Series without
/// timestamps get hourly ones.
pub fn write_csv(series: &Series, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(series.channels.iter().cloned());
    writer.write_record(&header)?;
    let stamps = match &series.timestamps {
        Some(t) => t.clone(),
        None => hourly_timestamps(series.len()),
    };
    for (t, stamp) in stamps.iter().enumerate() {
        let mut row = vec![stamp.clone()];
        row.extend(series.values.row(t).iter().map(|v| v.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
