use serde::{Deserialize, Serialize};

use crate::data::make_windows;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Pearson correlation, or `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let denom = (saa * sbb).sqrt();
    (denom > 1e-12 * n).then(|| (sab / denom).clamp(-1.0, 1.0))
}

/// Mean correlation between input and output patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagMap {
    pub patch_len: usize,
    pub windows: usize,
    /// `matrix[i][j]`: input patch `i` (0 is oldest) against output patch `j`.
    pub matrix: Vec<Vec<f64>>,
    /// Number of (window, channel) pairs that contributed to each entry.
    pub counts: Vec<Vec<usize>>,
}

impl LagMap {
    pub fn input_patches(&self) -> usize {
        self.matrix.len()
    }

    pub fn output_patches(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    /// Time offset between the starts of input patch `i` and output patch `j`.
    pub fn lag(&self, i: usize, j: usize) -> usize {
        (self.input_patches() - i + j) * self.patch_len
    }
}

/// Correlates non-overlapping length-`patch_len` patches of each lookback
/// (aligned to its end) with those of the following horizon, averaged over
/// all windows of the series and all channels. Constant patches are skipped.
pub fn lag_correlation_map(
    values: &Tensor<f32>,
    lookback: usize,
    horizon: usize,
    patch_len: usize,
    stride: usize,
) -> Result<LagMap> {
    if patch_len == 0 || patch_len > lookback || patch_len > horizon {
        return Err(Error::InvalidArgument(format!(
            "patch length {patch_len} must be in 1..=min(lookback, horizon)"
        )));
    }
    let windows = make_windows(values, 0..values.rows(), lookback, horizon, stride)?;
    let (n_in, n_out) = (lookback / patch_len, horizon / patch_len);
    let mut sums = vec![vec![0.0; n_out]; n_in];
    let mut counts = vec![vec![0usize; n_out]; n_in];
    let offset = lookback - n_in * patch_len;
    for w in &windows {
        for c in 0..values.cols() {
            let x: Vec<f64> = w.lookback.column(c).into_iter().map(f64::from).collect();
            let y: Vec<f64> = w.target.column(c).into_iter().map(f64::from).collect();
            for i in 0..n_in {
                let a = &x[offset + i * patch_len..offset + (i + 1) * patch_len];
                for j in 0..n_out {
                    if let Some(r) = pearson(a, &y[j * patch_len..(j + 1) * patch_len]) {
                        sums[i][j] += r;
                        counts[i][j] += 1;
                    }
                }
            }
        }
    }
    let matrix = sums
        .iter()
        .zip(&counts)
        .map(|(row, cnt)| row.iter().zip(cnt).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect())
        .collect();
    Ok(LagMap {
        patch_len,
        windows: windows.len(),
        matrix,
        counts,
    })
}
