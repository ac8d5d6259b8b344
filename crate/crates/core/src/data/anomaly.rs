use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use super::Series;
use crate::numerics::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    AbruptOutlier,
    PeriodicityDeviation,
    ZeroImputation,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::AbruptOutlier,
        AnomalyKind::PeriodicityDeviation,
        AnomalyKind::ZeroImputation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AnomalyKind::AbruptOutlier => "abrupt_outlier",
            AnomalyKind::PeriodicityDeviation => "periodicity_deviation",
            AnomalyKind::ZeroImputation => "zero_imputation",
        }
    }
}

/// A corrupted region `position .. position + length`, applied to every
/// channel.
///
/// `magnitude` is in units of each channel's standard deviation and only
/// affects outliers. `period` is the seasonality that periodicity
/// deviations distort. `seed` picks the outlier sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub position: usize,
    pub length: usize,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_magnitude() -> f64 {
    5.0
}

fn default_period() -> f64 {
    24.0
}

impl AnomalySpec {
    pub fn new(kind: AnomalyKind, position: usize, length: usize) -> Self {
        AnomalySpec {
            kind,
            position,
            length,
            magnitude: default_magnitude(),
            period: default_period(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injected {
    pub series: Series,
    /// `mask[t]` is true inside the corrupted region.
    pub mask: Vec<bool>,
}

/// Least-squares fit of `a·sin(ωt) + b·cos(ωt) + c`.
fn fit_sinusoid(x: &[f64], omega: f64) -> [f64; 3] {
    let mut ata = [[0.0; 3]; 3];
    let mut atb = [0.0; 3];
    for (t, v) in x.iter().enumerate() {
        let basis = [(omega * t as f64).sin(), (omega * t as f64).cos(), 1.0];
        for i in 0..3 {
            atb[i] += basis[i] * v;
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
        }
    }
    solve3(ata, atb).unwrap_or([0.0, 0.0, x.iter().sum::<f64>() / x.len().max(1) as f64])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let d = det3(&a);
    if d.abs() < 1e-9 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for i in 0..3 {
            m[i][k] = b[i];
        }
        *o = det3(&m) / d;
    }
    Some(out)
}

/// Returns a corrupted copy of `series` and the ground-truth mask. Rows
/// outside the mask are copied unchanged.
pub fn inject_anomaly(series: &Series, spec: &AnomalySpec) -> Result<Injected> {
    let len = series.len();
    let end = spec.position.checked_add(spec.length).filter(|e| *e <= len).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "anomaly region {}..{} outside a series of length {len}",
            spec.position,
            spec.position.saturating_add(spec.length)
        ))
    })?;
    let region = spec.position..end;
    let mut values = series.values.clone();
    let channels = series.num_channels();
    let column = |c: usize| -> Vec<f64> { series.values.column(c).into_iter().map(f64::from).collect() };

    match spec.kind {
        AnomalyKind::ZeroImputation => {
            for t in region.clone() {
                values.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        AnomalyKind::AbruptOutlier => {
            if !spec.magnitude.is_finite() {
                return Err(Error::InvalidArgument("outlier magnitude must be finite".into()));
            }
            let sign = if Rng::new(spec.seed).uniform() < 0.5 { -1.0 } else { 1.0 };
            for c in 0..channels {
                let x = column(c);
                let mean = x.iter().sum::<f64>() / len as f64;
                let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64).sqrt();
                let shift = sign * spec.magnitude * std;
                for t in region.clone() {
                    let v = &mut values.row_mut(t)[c];
                    *v = (*v as f64 + shift) as f32;
                }
            }
        }
        AnomalyKind::PeriodicityDeviation => {
            if !(spec.period.is_finite() && spec.period > 0.0) {
                return Err(Error::InvalidArgument("period must be positive".into()));
            }
            let omega = TAU / spec.period;
            for c in 0..channels {
                let x = column(c);
                let [a, b, _] = fit_sinusoid(&x, omega);
                let amp = a.hypot(b);
                let phase = b.atan2(a);
                let start = spec.position as f64;
                for t in region.clone() {
                    let tf = t as f64;
                    let seasonal = amp * (omega * tf + phase).sin();
                    let shifted = amp * (1.5 * omega * (tf - start) + omega * start + phase + FRAC_PI_2).sin();
                    let v = &mut values.row_mut(t)[c];
                    *v = (x[t] - seasonal + shifted) as f32;
                }
            }
        }
    }
    let mask = (0..len).map(|t| region.contains(&t)).collect();
    Ok(Injected {
        series: series.with_values(values),
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_sinusoid_coefficients() {
        let omega = TAU / 24.0;
        let x: Vec<f64> = (0..200)
            .map(|t| 2.0 * (omega * t as f64).sin() - 0.5 * (omega * t as f64).cos() + 3.0)
            .collect();
        let [a, b, c] = fit_sinusoid(&x, omega);
        assert!((a - 2.0).abs() < 1e-9 && (b + 0.5).abs() < 1e-9 && (c - 3.0).abs() < 1e-9);
    }
}
