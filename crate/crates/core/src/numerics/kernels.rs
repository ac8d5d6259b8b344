//! Plain (tape-free) kernels shared by the graph ops and the reference
//! implementations used in tests.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Softmax with max subtraction.
pub fn stable_softmax<F: Scalar>(x: &[F]) -> Result<Vec<F>> {
    if x.is_empty() {
        return Err(Error::InvalidShape("softmax over an empty axis".into()));
    }
    let max = x.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    for v in &mut out {
        *v /= total;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "softmax" });
    }
    Ok(out)
}

/// Softmax of a 2-D tensor along `axis` (0 = over rows, 1 = within each row).
pub fn softmax_axis<F: Scalar>(x: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    if x.shape().len() != 2 {
        return Err(Error::InvalidShape(format!(
            "softmax_axis expects a matrix, got {:?}",
            x.shape()
        )));
    }
    match axis {
        1 => {
            let mut data = Vec::with_capacity(x.len());
            for i in 0..x.rows() {
                data.extend(stable_softmax(x.row(i))?);
            }
            Tensor::new(x.shape().to_vec(), data)
        }
        0 => Ok(softmax_axis(&x.transpose(), 1)?.transpose()),
        _ => Err(Error::InvalidArgument(format!("axis {axis} out of range"))),
    }
}

/// Indices of the `k` largest scores, ties resolved towards the smaller
/// index, returned in ascending index order.
pub fn top_k_indices<F: Scalar>(scores: &[F], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("top-k requires k >= 1".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "top_k" });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    if k < scores.len() {
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order.sort_unstable();
    }
    Ok(order)
}

/// Row-wise layer normalization with an affine transform.
pub fn layer_norm<F: Scalar>(
    x: &Tensor<F>,
    gamma: &[F],
    beta: &[F],
    eps: f64,
) -> Result<Tensor<F>> {
    let d = x.cols();
    if d == 0 || gamma.len() != d || beta.len() != d {
        return Err(Error::InvalidShape(format!(
            "layer_norm over width {d} with gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    let mut out = x.clone();
    for i in 0..x.rows() {
        let stats = RowStats::of(x.row(i), eps);
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = gamma[j] * (*v - stats.mean) * stats.rstd + beta[j];
        }
    }
    Ok(out)
}

pub(crate) struct RowStats<F> {
    pub mean: F,
    pub rstd: F,
}

impl<F: Scalar> RowStats<F> {
    pub fn of(row: &[F], eps: f64) -> Self {
        let n = F::of(row.len() as f64);
        let mean = row.iter().copied().sum::<F>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        Self {
            mean,
            rstd: F::one() / (var + F::of(eps)).sqrt(),
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<F: Scalar>(x: F) -> F {
    let inner = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    F::of(0.5) * x * (F::one() + inner.tanh())
}

pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let inner = F::of(GELU_C) * (x + F::of(GELU_A) * x * x * x);
    let th = inner.tanh();
    let dinner = F::of(GELU_C) * (F::one() + F::of(3.0 * GELU_A) * x * x);
    F::of(0.5) * (F::one() + th) + F::of(0.5) * x * (F::one() - th * th) * dinner
}

pub fn softplus<F: Scalar>(x: F) -> F {
    if x > F::of(20.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(stable_softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        let y = stable_softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((y[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(stable_softmax(&[5.0f32]).unwrap(), vec![1.0]);
        assert!(matches!(
            stable_softmax::<f32>(&[]),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let y = stable_softmax(&[1000.0f32, 999.0, -1000.0]).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_axis_zero_normalizes_columns() {
        let x = Tensor::<f64>::from_rows(&[vec![0.0, 1.0], vec![0.0, 3.0]]);
        let y = softmax_axis(&x, 0).unwrap();
        assert!((y.at(0, 0) - 0.5).abs() < 1e-12);
        assert!((y.at(0, 1) + y.at(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_indices(&[0.2, 0.9, 0.9, -1.0], 2).unwrap(), vec![1, 2]);
        assert_eq!(top_k_indices(&[0.5, 0.5, 0.1], 1).unwrap(), vec![0]);
        assert_eq!(top_k_indices(&[3.0, 1.0, 2.0], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(top_k_indices(&[3.0, 1.0], 7).unwrap(), vec![0, 1]);
        assert!(matches!(
            top_k_indices(&[1.0], 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn layer_norm_examples() {
        let ones = [1.0f64, 1.0];
        let zeros = [0.0f64, 0.0];
        let c = Tensor::from_rows(&[vec![4.0, 4.0]]);
        assert_eq!(layer_norm(&c, &ones, &zeros, 1e-5).unwrap().data(), &[0.0, 0.0]);
        let x = Tensor::from_rows(&[vec![1.0, 3.0]]);
        let y = layer_norm(&x, &ones, &zeros, 1e-5).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-3 && (y.data()[1] - 1.0).abs() < 1e-3);
        let y = layer_norm(&x, &zeros, &[5.0, 5.0], 1e-5).unwrap();
        assert_eq!(y.data(), &[5.0, 5.0]);
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    fn brute_top_k(scores: &[f64], k: usize) -> Vec<usize> {
        let mut pairs: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
        // descending by score, then ascending by index
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> = pairs.into_iter().take(k).map(|p| p.1).collect();
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(x in prop::collection::vec(-50.0f64..50.0, 1..=64)) {
            let y = stable_softmax(&x).unwrap();
            let total: f64 = y.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
            prop_assert!(y.iter().all(|&v| v > 0.0 && v <= 1.0));
        }

        #[test]
        fn softmax_sums_to_one_f32(x in prop::collection::vec(-30.0f32..30.0, 1..=64)) {
            let y = stable_softmax(&x).unwrap();
            let total: f64 = y.iter().map(|&v| v as f64).sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn top_k_matches_sort_oracle(
            // small integer grid so ties are common
            x in prop::collection::vec((-4i32..4).prop_map(|v| v as f64 * 0.5), 1..=32),
            k in 1usize..=32,
        ) {
            prop_assert_eq!(top_k_indices(&x, k).unwrap(), brute_top_k(&x, k));
        }
    }
}
