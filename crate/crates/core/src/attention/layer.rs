//! Multi-head attention layer over a token matrix, dispatching on the
//! configured variant.

use crate::attention::ops::{softmax_pool, sparse_expert_attention, Selection};
use crate::attention::{AttentionVariant, HeadTrace, TmoeConfig};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Rng, Scalar, Tensor, Var};

/// `lambda` value whose softplus is exactly 1.
pub fn unit_decay_lambda() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

pub fn head_key(prefix: &str, head: usize, leaf: &str) -> String {
    format!("{prefix}.head{head}.{leaf}")
}

/// Registers every attention parameter under `prefix`. All variants get the
/// same parameter set so runs that differ only in variant start from
/// identical weights.
pub fn init_attention_params<F: Scalar>(
    store: &mut ParamStore<F>,
    rng: &mut Rng,
    prefix: &str,
    cfg: &TmoeConfig,
) {
    let (dm, dk) = (cfg.d_model, cfg.d_k());
    for h in 0..cfg.num_heads {
        for w in ["w_q", "w_k", "w_v"] {
            let bound = 1.0 / (dm as f64).sqrt();
            store.init_uniform(rng, &head_key(prefix, h, w), &[dm, dk], bound);
        }
        store.insert(
            head_key(prefix, h, "lambda"),
            Tensor::scalar(F::of(unit_decay_lambda())),
        );
        store.init_linear(rng, &head_key(prefix, h, "phi"), dm, dk, true);
    }
    store.init_linear(rng, &format!("{prefix}.out"), dm, dm, true);
}

fn linear<F: Scalar>(g: &mut Graph<F>, store: &ParamStore<F>, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add_row(xw, b)
}

/// One head of the configured variant. Full attention returns an empty trace.
pub fn attention_head<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    prefix: &str,
    head: usize,
    cfg: &TmoeConfig,
    x: Var,
    rng: Option<&mut Rng>,
) -> Result<(Var, HeadTrace)> {
    let wq = g.param(store, &head_key(prefix, head, "w_q"))?;
    let wk = g.param(store, &head_key(prefix, head, "w_k"))?;
    let wv = g.param(store, &head_key(prefix, head, "w_v"))?;
    let q = g.matmul(x, wq)?;
    let k = g.matmul(x, wk)?;
    let v = g.matmul(x, wv)?;
    match cfg.variant {
        AttentionVariant::Full => {
            let kt = g.transpose(k)?;
            let logits = g.matmul(q, kt)?;
            let logits = g.scale(logits, F::one() / F::of(cfg.d_k() as f64).sqrt())?;
            let alpha = g.row_softmax(logits, cfg.causal)?;
            Ok((g.matmul(alpha, v)?, HeadTrace::default()))
        }
        AttentionVariant::Random => {
            let rng = rng.ok_or_else(|| {
                Error::InvalidArgument("random attention needs a random stream".into())
            })?;
            let selection = Selection::Random { k: cfg.top_k, rng };
            sparse_expert_attention(g, q, k, v, None, None, selection, cfg.causal)
        }
        AttentionVariant::Tmoe => {
            let lambda = if cfg.temporal_decay {
                Some(g.param(store, &head_key(prefix, head, "lambda"))?)
            } else {
                None
            };
            let global = if cfg.share_global {
                let pooled = softmax_pool(g, x, cfg.causal)?;
                Some(linear(g, store, &head_key(prefix, head, "phi"), pooled)?)
            } else {
                None
            };
            let selection = Selection::TopK(cfg.top_k);
            sparse_expert_attention(g, q, k, v, lambda, global, selection, cfg.causal)
        }
    }
}

/// All heads, concatenated and projected by the output matrix.
pub fn multi_head_attention<F: Scalar>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    prefix: &str,
    cfg: &TmoeConfig,
    x: Var,
    mut rng: Option<&mut Rng>,
) -> Result<(Var, Vec<HeadTrace>)> {
    if g.value(x).cols() != cfg.d_model {
        return Err(Error::InvalidShape(format!(
            "attention input {:?} for d_model {}",
            g.shape(x),
            cfg.d_model
        )));
    }
    let mut heads = Vec::with_capacity(cfg.num_heads);
    let mut traces = Vec::with_capacity(cfg.num_heads);
    for h in 0..cfg.num_heads {
        let (y, trace) = attention_head(g, store, prefix, h, cfg, x, rng.as_deref_mut())?;
        heads.push(y);
        traces.push(trace);
    }
    let concat = g.concat_cols(&heads)?;
    let y = linear(g, store, &format!("{prefix}.out"), concat)?;
    Ok((y, traces))
}

/// Forward pass of a single TMOE head on a token matrix, without keeping
/// the tape.
pub fn tmoe_head_forward<F: Scalar>(
    x: &Tensor<F>,
    store: &ParamStore<F>,
    prefix: &str,
    head: usize,
    cfg: &TmoeConfig,
) -> Result<(Tensor<F>, HeadTrace)> {
    cfg.validate()?;
    let mut g = Graph::new();
    let xv = g.constant(x.clone())?;
    let (y, trace) = attention_head(&mut g, store, prefix, head, cfg, xv, None)?;
    Ok((g.value(y).clone(), trace))
}

/// Multi-head TMOE forward pass without keeping the tape.
pub fn multi_head_tmoe<F: Scalar>(
    x: &Tensor<F>,
    store: &ParamStore<F>,
    prefix: &str,
    cfg: &TmoeConfig,
) -> Result<(Tensor<F>, Vec<HeadTrace>)> {
    cfg.validate()?;
    let mut g = Graph::new();
    let xv = g.constant(x.clone())?;
    let (y, traces) = multi_head_attention(&mut g, store, prefix, cfg, xv, None)?;
    Ok((g.value(y).clone(), traces))
}
