//! Tape-free forms of the attention kernels.

use crate::error::{Error, Result};
use crate::numerics::kernels::{dot, softplus, stable_softmax};
use crate::numerics::{top_k_indices, Rng, Scalar, Tensor};

/// Scaled dot-product attention. Returns the outputs and the weight matrix.
pub fn vanilla_attention<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    causal: bool,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let n = q.rows();
    if n == 0 || q.shape().len() != 2 {
        return Err(Error::InvalidShape("attention over zero tokens".into()));
    }
    if k.rows() != n || v.rows() != n || k.cols() != q.cols() {
        return Err(Error::InvalidShape(format!(
            "q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let scale = F::one() / F::of(q.cols() as f64).sqrt();
    let dv = v.cols();
    let mut weights = vec![F::zero(); n * n];
    let mut out = vec![F::zero(); n * dv];
    for t in 0..n {
        let end = if causal { t + 1 } else { n };
        let logits: Vec<F> = (0..end).map(|s| dot(q.row(t), k.row(s)) * scale).collect();
        let alpha = stable_softmax(&logits)?;
        for (s, &a) in alpha.iter().enumerate() {
            weights[t * n + s] = a;
            for (o, &x) in out[t * dv..(t + 1) * dv].iter_mut().zip(v.row(s)) {
                *o += a * x;
            }
        }
    }
    Ok((Tensor::new(vec![n, dv], out)?, Tensor::new(vec![n, n], weights)?))
}

/// Decay factor `exp(-softplus(lambda) * distance / n_ctx)`.
pub fn temporal_relevance<F: Scalar>(distance: usize, lambda: F, n_ctx: usize) -> F {
    let rate = softplus(lambda);
    (-rate * F::of(distance as f64) / F::of(n_ctx.max(1) as f64)).exp()
}

/// Combined similarity x relevance score of every candidate expert for
/// query `t`. Under `causal` only tokens `0..=t` are candidates; passing
/// `lambda = None` fixes the relevance factor at 1.
pub fn local_expert_scores<F: Scalar>(
    q_t: &[F],
    k: &Tensor<F>,
    t: usize,
    lambda: Option<F>,
    causal: bool,
) -> Vec<F> {
    let n = k.rows();
    let scale = F::one() / F::of(k.cols() as f64).sqrt();
    let end = if causal { (t + 1).min(n) } else { n };
    (0..end)
        .map(|s| {
            let sim = dot(q_t, k.row(s)) * scale;
            match lambda {
                Some(l) => sim * temporal_relevance(t.abs_diff(s), l, n),
                None => sim,
            }
        })
        .collect()
}

/// Top-`k` experts for one query, clamped to the candidate count.
pub fn select_local_experts<F: Scalar>(scores: &[F], k: usize) -> Result<Vec<usize>> {
    top_k_indices(scores, k)
}

/// Softmax-weighted self-pooling of each column over rows `0..rows`.
pub(crate) fn pool_columns<F: Scalar>(x: &Tensor<F>, rows: usize) -> Vec<F> {
    let cols = x.cols();
    let mut pooled = vec![F::zero(); cols];
    for (d, p) in pooled.iter_mut().enumerate() {
        let column: Vec<F> = (0..rows).map(|t| x.at(t, d)).collect();
        let max = column.iter().copied().fold(F::neg_infinity(), F::max);
        let weights: Vec<F> = column.iter().map(|&c| (c - max).exp()).collect();
        let total: F = weights.iter().copied().sum();
        *p = weights.iter().zip(&column).map(|(&w, &c)| w * c).sum::<F>() / total;
    }
    pooled
}

/// Global expert key (= value) for a token matrix: per-dimension
/// softmax pooling over tokens followed by the projection `phi_w`, `phi_b`.
/// Returns `(pooled, key)`.
pub fn global_expert_summary<F: Scalar>(
    x: &Tensor<F>,
    phi_w: &Tensor<F>,
    phi_b: &[F],
) -> Result<(Vec<F>, Vec<F>)> {
    if x.rows() == 0 {
        return Err(Error::InvalidShape("global expert over zero tokens".into()));
    }
    if phi_w.rows() != x.cols() || phi_w.cols() != phi_b.len() {
        return Err(Error::InvalidShape(format!(
            "projection {:?} for width {}",
            phi_w.shape(),
            x.cols()
        )));
    }
    let pooled = pool_columns(x, x.rows());
    let key = (0..phi_w.cols())
        .map(|j| {
            phi_b[j]
                + pooled
                    .iter()
                    .enumerate()
                    .map(|(d, &p)| p * phi_w.at(d, j))
                    .sum::<F>()
        })
        .collect();
    Ok((pooled, key))
}

/// Attention over `k` uniformly random experts per query. Ablation baseline.
pub fn random_attention_forward<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    top_k: usize,
    rng: &mut Rng,
) -> Result<Tensor<F>> {
    if top_k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = q.rows();
    let dv = v.cols();
    let scale = F::one() / F::of(q.cols() as f64).sqrt();
    let mut out = vec![F::zero(); n * dv];
    for t in 0..n {
        let chosen = rng.sample_indices(n, top_k);
        let logits: Vec<F> = chosen.iter().map(|&s| dot(q.row(t), k.row(s)) * scale).collect();
        let gates = stable_softmax(&logits)?;
        for (&s, &g) in chosen.iter().zip(&gates) {
            for (o, &x) in out[t * dv..(t + 1) * dv].iter_mut().zip(v.row(s)) {
                *o += g * x;
            }
        }
    }
    Tensor::new(vec![n, dv], out)
}
