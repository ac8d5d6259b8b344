use crate::numerics::{Scalar, Tensor};

pub const NORM_EPS: f64 = 1e-5;

/// Per-window statistics used to undo instance normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
}

impl WindowStats {
    pub fn denominator(&self) -> f64 {
        self.std + NORM_EPS
    }
}

/// `(x - mean) / (std + eps)` with population statistics of the window.
pub fn instance_normalize<F: Scalar>(window: &[F]) -> (Vec<F>, WindowStats) {
    let n = window.len().max(1) as f64;
    let mean = window.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = window.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
    let stats = WindowStats {
        mean,
        std: var.sqrt(),
    };
    let denom = stats.denominator();
    let out = window
        .iter()
        .map(|v| F::of((v.as_f64() - mean) / denom))
        .collect();
    (out, stats)
}

pub fn denormalize<F: Scalar>(y: &Tensor<F>, stats: &WindowStats) -> Tensor<F> {
    let mut out = y.clone();
    let (scale, shift) = (F::of(stats.denominator()), F::of(stats.mean));
    out.data_mut().iter_mut().for_each(|v| *v = *v * scale + shift);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_window_maps_to_zero() {
        let (y, stats) = instance_normalize(&[3.0f64; 10]);
        assert!(y.iter().all(|&v| v == 0.0));
        assert_eq!(stats.std, 0.0);
    }

    #[test]
    fn two_point_window() {
        let (y, stats) = instance_normalize(&[1.0f64, 3.0]);
        assert_eq!(stats.mean, 2.0);
        assert!((y[0] + 1.0).abs() < 1e-3 && (y[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn round_trip_and_affine() {
        let x = vec![0.5f64, -2.0, 7.25, 3.0, 3.5];
        let (y, stats) = instance_normalize(&x);
        let mean = y.iter().sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-5);
        let back = denormalize(&Tensor::vector(y), &stats);
        for (a, b) in back.data().iter().zip(&x) {
            assert!((a - b).abs() < 1e-5);
        }
        let zeros = denormalize(&Tensor::vector(vec![0.0f64; 3]), &stats);
        assert!(zeros.data().iter().all(|&v| v == stats.mean));
        let one = denormalize(&Tensor::vector(vec![1.0f64]), &stats);
        assert!((one.data()[0] - (stats.mean + stats.std + NORM_EPS)).abs() < 1e-12);
    }
}
