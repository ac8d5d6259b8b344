use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Scalar, Tensor, Var};

/// Splits a window into `N = (L - P) / S + 1` tokens of length `P`;
/// a trailing remainder shorter than `P` is dropped.
pub fn patchify<F: Scalar>(window: &[F], patch_len: usize, stride: usize) -> Result<Tensor<F>> {
    if patch_len == 0 || stride == 0 || patch_len > window.len() {
        return Err(Error::InvalidArgument(format!(
            "patch length {patch_len} / stride {stride} invalid for window of {}",
            window.len()
        )));
    }
    let n = (window.len() - patch_len) / stride + 1;
    let mut data = Vec::with_capacity(n * patch_len);
    for i in 0..n {
        data.extend_from_slice(&window[i * stride..i * stride + patch_len]);
    }
    Tensor::new(vec![n, patch_len], data)
}

/// `tokens . W_emb + pos[0..N]`.
pub fn embed_patches<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    tokens: Var,
) -> Result<Var> {
    let n = g.value(tokens).rows();
    let w = g.param(store, "embed.w")?;
    let pos = g.param(store, "embed.pos")?;
    let max = g.value(pos).rows();
    if n > max {
        return Err(Error::InvalidArgument(format!(
            "{n} tokens exceed the positional table of {max}"
        )));
    }
    let proj = g.matmul(tokens, w)?;
    let pos = g.slice_rows(pos, 0, n)?;
    g.add(proj, pos)
}
