use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub mse: f64,
    pub mae: f64,
}

/// Published numbers a run can be compared against. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperReference {
    pub description: String,
    pub mse: f64,
    pub mae: f64,
}

impl PaperReference {
    fn new(description: &str, mse: f64, mae: f64) -> Self {
        PaperReference {
            description: description.to_string(),
            mse,
            mae,
        }
    }
}

/// Published reference values used as report annotations.
pub mod anchors {
    use super::PaperReference;

    pub fn timeexpert_etth1() -> PaperReference {
        PaperReference::new("TimeExpert, ETTh1, average over horizons 96-720", 0.428, 0.432)
    }

    pub fn attention_etth1(variant: &str) -> Option<PaperReference> {
        let (mse, mae) = match variant {
            "full" => (0.438, 0.435),
            "random" => (0.433, 0.433),
            "tmoe" => (0.428, 0.432),
            _ => return None,
        };
        Some(PaperReference::new(&format!("{variant} attention, ETTh1 average"), mse, mae))
    }

    pub fn share_solar(share: bool) -> PaperReference {
        if share {
            PaperReference::new("shared global expert, Solar-Energy average", 0.229, 0.263)
        } else {
            PaperReference::new("without shared global expert, Solar-Energy average", 0.232, 0.265)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub variant: String,
    pub config_digest: String,
    pub seed: u64,
    pub horizons: Vec<HorizonMetrics>,
    pub average: Average,
    pub wall_clock_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub paper_reference: Option<PaperReference>,
}

impl EvalReport {
    /// Builds a report whose average is the plain mean of `horizons`.
    pub fn new(
        dataset: impl Into<String>,
        variant: impl Into<String>,
        config_digest: String,
        seed: u64,
        horizons: Vec<HorizonMetrics>,
        wall_clock_secs: f64,
    ) -> Self {
        let n = horizons.len().max(1) as f64;
        let average = Average {
            mse: horizons.iter().map(|h| h.mse).sum::<f64>() / n,
            mae: horizons.iter().map(|h| h.mae).sum::<f64>() / n,
        };
        EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            dataset: dataset.into(),
            variant: variant.into(),
            config_digest,
            seed,
            horizons,
            average,
            wall_clock_secs,
            paper_reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Option<PaperReference>) -> Self {
        self.paper_reference = reference;
        self
    }
}

/// Hex SHA-256 of the value's JSON encoding.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_rows_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
