use serde::{Deserialize, Serialize};

use super::{Predictor, TrainedModel};
use crate::attention::selection_fraction;
use crate::data::{inject_anomaly, AnomalyKind, AnomalySpec, Series, Window};
use crate::numerics::{derive_seed, Rng};
use crate::training::mse;
use crate::{Error, Result};

/// Clean vs corrupted forecasting for one (variant, anomaly, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub variant: String,
    pub anomaly: AnomalyKind,
    pub seed: u64,
    pub windows: usize,
    pub clean_mse: f64,
    pub corrupted_mse: f64,
    /// Mean over windows of `|f(corrupt) - f(clean)|^2 / (H * C)`.
    pub deviation: f64,
    /// Fraction of selected local experts whose token overlaps the
    /// anomaly; absent for full attention.
    pub selection_fraction: Option<f64>,
}

fn tokens_hit(model: &TrainedModel, mask: &[bool]) -> Vec<bool> {
    model
        .model
        .token_spans()
        .into_iter()
        .map(|span| span.into_iter().any(|t| mask.get(t).copied().unwrap_or(false)))
        .collect()
}

/// Corrupts the lookback of sampled test windows and compares forecasts.
///
/// Anomaly positions are relative to the lookback. For each seed, up to
/// `max_windows` windows are drawn without replacement and every anomaly
/// draws its own outlier sign from the seed.
pub fn anomaly_harness(
    variants: &[(String, TrainedModel)],
    windows: &[Window],
    specs: &[AnomalySpec],
    seeds: &[u64],
    max_windows: usize,
) -> Result<Vec<RobustnessReport>> {
    if windows.is_empty() || max_windows == 0 {
        return Err(Error::InvalidArgument("anomaly harness needs at least one window".into()));
    }
    let mut out = Vec::new();
    for (label, model) in variants {
        for (a, spec) in specs.iter().enumerate() {
            for &seed in seeds {
                let picks = Rng::new(seed).sample_indices(windows.len(), max_windows.min(windows.len()));
                let (mut clean, mut corrupt, mut dev) = (0.0, 0.0, 0.0);
                let mut fractions = Vec::new();
                for &i in &picks {
                    let w = &windows[i];
                    let channels = (0..w.lookback.cols()).map(|c| format!("c{c}")).collect();
                    let series = Series::new("window", w.lookback.clone(), channels)?;
                    let mut spec = spec.clone();
                    spec.seed = derive_seed(seed, &[a as u64, i as u64]);
                    let injected = inject_anomaly(&series, &spec)?;
                    let horizon = w.target.rows();
                    let y_clean = model.forecast(&w.lookback, horizon)?;
                    let (y_bad, traces) = model.model.predict_traced(&model.params, &injected.series.values)?;
                    if y_bad.rows() != horizon {
                        return Err(Error::InvalidArgument(format!(
                            "model forecasts {} steps, windows need {horizon}",
                            y_bad.rows()
                        )));
                    }
                    clean += mse(&y_clean, &w.target)?;
                    corrupt += mse(&y_bad, &w.target)?;
                    dev += mse(&y_bad, &y_clean)?;
                    let hit = tokens_hit(model, &injected.mask);
                    if let Some(f) = selection_fraction(traces.iter().flatten().flatten(), &hit) {
                        fractions.push(f);
                    }
                }
                let n = picks.len() as f64;
                out.push(RobustnessReport {
                    variant: label.clone(),
                    anomaly: spec.kind,
                    seed,
                    windows: picks.len(),
                    clean_mse: clean / n,
                    corrupted_mse: corrupt / n,
                    deviation: dev / n,
                    selection_fraction: (!fractions.is_empty())
                        .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
                });
            }
        }
    }
    Ok(out)
}
