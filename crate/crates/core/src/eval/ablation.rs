use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{anchors, EvalReport, Experiment};
use crate::attention::AttentionVariant;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arm: String,
    /// A horizon length, or `avg`.
    pub horizon: String,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub reports: Vec<EvalReport>,
}

impl ComparisonTable {
    fn from_reports(reports: Vec<EvalReport>) -> Self {
        let mut rows = Vec::new();
        for r in &reports {
            for h in &r.horizons {
                rows.push(ComparisonRow {
                    arm: r.variant.clone(),
                    horizon: h.horizon.to_string(),
                    mse: h.mse,
                    mae: h.mae,
                });
            }
            rows.push(ComparisonRow {
                arm: r.variant.clone(),
                horizon: "avg".into(),
                mse: r.average.mse,
                mae: r.average.mae,
            });
        }
        ComparisonTable { rows, reports }
    }

    pub fn arm(&self, name: &str) -> impl Iterator<Item = &ComparisonRow> {
        let name = name.to_string();
        self.rows.iter().filter(move |r| r.arm == name)
    }
}

/// Trains full, random-subset and TMOE attention under identical seeds.
pub fn ablate_attention(exp: &Experiment) -> Result<ComparisonTable> {
    let mut reports = Vec::new();
    for variant in [AttentionVariant::Full, AttentionVariant::Random, AttentionVariant::Tmoe] {
        let mut cfg = exp.model.clone();
        cfg.tmoe.variant = variant;
        let report = exp.run(variant.label(), &cfg)?;
        reports.push(report.with_reference(anchors::attention_etth1(variant.label())));
    }
    Ok(ComparisonTable::from_reports(reports))
}

/// Trains TMOE with and without the shared global expert.
pub fn ablate_share(exp: &Experiment) -> Result<ComparisonTable> {
    let mut reports = Vec::new();
    for share in [true, false] {
        let mut cfg = exp.model.clone();
        cfg.tmoe.variant = AttentionVariant::Tmoe;
        cfg.tmoe.share_global = share;
        let label = if share { "share" } else { "no_share" };
        reports.push(exp.run(label, &cfg)?.with_reference(Some(anchors::share_solar(share))));
    }
    Ok(ComparisonTable::from_reports(reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkRow {
    pub k: usize,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
}

/// Spread of full-attention test MSE/MAE across training seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnvelope {
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopkSweep {
    /// Number of tokens per channel, the largest meaningful k.
    pub num_tokens: usize,
    pub rows: Vec<TopkRow>,
    pub reference: Vec<ReferenceEnvelope>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// One TMOE run per `k`, plus full attention over `reference_seeds`
/// consecutive seeds for scale.
pub fn sweep_topk(exp: &Experiment, ks: &[usize], reference_seeds: usize) -> Result<TopkSweep> {
    if ks.is_empty() {
        return Err(Error::Config("no k values given".into()));
    }
    if ks.contains(&0) {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if ks.iter().collect::<BTreeSet<_>>().len() != ks.len() {
        return Err(Error::Config(format!("duplicate k in {ks:?}")));
    }
    let mut rows = Vec::new();
    for &k in ks {
        let mut cfg = exp.model.clone();
        cfg.tmoe.variant = AttentionVariant::Tmoe;
        cfg.tmoe.top_k = k;
        let report = exp.run(&format!("k{k}"), &cfg)?;
        rows.extend(report.horizons.iter().map(|h| TopkRow {
            k,
            horizon: h.horizon,
            mse: h.mse,
            mae: h.mae,
        }));
    }

    let mut full = exp.model.clone();
    full.tmoe.variant = AttentionVariant::Full;
    let seeds: Vec<u64> = (0..reference_seeds as u64).map(|i| exp.train.seed + i).collect();
    let mut runs = Vec::new();
    for &seed in &seeds {
        let mut e = exp.clone();
        e.train.seed = seed;
        runs.push(e.run("full", &full)?);
    }
    let reference = if runs.is_empty() {
        Vec::new()
    } else {
        exp.horizons
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let mse: Vec<f64> = runs.iter().map(|r| r.horizons[i].mse).collect();
                let mae: Vec<f64> = runs.iter().map(|r| r.horizons[i].mae).collect();
                let (mse_mean, mse_std) = mean_std(&mse);
                let (mae_mean, mae_std) = mean_std(&mae);
                ReferenceEnvelope {
                    horizon: h,
                    seeds: seeds.clone(),
                    mse_mean,
                    mse_std,
                    mae_mean,
                    mae_std,
                }
            })
            .collect()
    };
    Ok(TopkSweep {
        num_tokens: exp.model.num_tokens(),
        rows,
        reference,
    })
}
