use crate::attention::{init_attention_params, multi_head_attention, HeadTrace};
use crate::error::Result;
use crate::model::{ForwardCtx, ModelConfig};
use crate::numerics::{Graph, ParamStore, Rng, Scalar, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

pub fn init_encoder_params<F: Scalar>(
    store: &mut ParamStore<F>,
    rng: &mut Rng,
    prefix: &str,
    cfg: &ModelConfig,
) {
    let d = cfg.d_model();
    init_attention_params(store, rng, &format!("{prefix}.attn"), &cfg.tmoe);
    for norm in ["norm1", "norm2"] {
        store.insert(format!("{prefix}.{norm}.gamma"), Tensor::filled(&[d], F::one()));
        store.insert(format!("{prefix}.{norm}.beta"), Tensor::zeros(&[d]));
    }
    store.init_linear(rng, &format!("{prefix}.ffn.fc1"), d, cfg.d_ff, true);
    store.init_linear(rng, &format!("{prefix}.ffn.fc2"), cfg.d_ff, d, true);
}

pub(crate) fn linear<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add_row(xw, b)
}

fn norm<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, prefix: &str, x: Var) -> Result<Var> {
    let gamma = g.param(store, &format!("{prefix}.gamma"))?;
    let beta = g.param(store, &format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, LN_EPS)
}

/// Post-norm residual block:
/// `Z = LN(X + Drop(MHA(X)))`, `out = LN(Z + Drop(FFN(Z)))`.
pub fn encoder_block<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    prefix: &str,
    cfg: &ModelConfig,
    x: Var,
    ctx: &mut ForwardCtx,
) -> Result<(Var, Vec<HeadTrace>)> {
    let (attn, traces) = multi_head_attention(
        g,
        store,
        &format!("{prefix}.attn"),
        &cfg.tmoe,
        x,
        Some(&mut ctx.rng),
    )?;
    let attn = ctx.dropout(g, attn, cfg.dropout)?;
    let res = g.add(x, attn)?;
    let z = norm(g, store, &format!("{prefix}.norm1"), res)?;

    let h = linear(g, store, &format!("{prefix}.ffn.fc1"), z)?;
    let h = g.gelu(h)?;
    let f = linear(g, store, &format!("{prefix}.ffn.fc2"), h)?;
    let f = ctx.dropout(g, f, cfg.dropout)?;
    let res = g.add(z, f)?;
    let out = norm(g, store, &format!("{prefix}.norm2"), res)?;
    Ok((out, traces))
}
