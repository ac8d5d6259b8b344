use crate::numerics::{Scalar, Tensor};
use crate::{Error, Result};

fn check_shapes<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<()> {
    if pred.shape() != target.shape() || pred.is_empty() {
        return Err(Error::InvalidShape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

pub fn mse<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn mae<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    check_shapes(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p.as_f64() - t.as_f64()).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss<F: Scalar>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<(f64, Tensor<F>)> {
    let loss = mse(pred, target)?;
    let n = F::of(pred.len() as f64);
    let two = F::of(2.0);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| two * (p - t) / n)
        .collect();
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}
