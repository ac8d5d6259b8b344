use serde::{Deserialize, Serialize};

use crate::attention::{attention_head, init_attention_params, multi_head_tmoe, tmoe_head_forward, AttentionVariant, TmoeConfig};
use crate::model::{encoder_block, ForwardCtx, Model, ModelConfig, PatchConfig};
use crate::numerics::{grad_check_where, ParamStore, Rng, Tensor};
use crate::{Error, Result};

/// Finite-difference step used by the suite.
pub const GRADIENT_STEP: f64 = 1e-3;
const PROBE_ATTEMPTS: u64 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
    /// Seed of the probe point that was used.
    pub probe: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSuite {
    pub step: f64,
    pub checks: Vec<GradientCheck>,
}

impl GradientSuite {
    pub fn max_rel_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

fn normal(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).expect("shape")
}

fn min_gap<'a>(traces: impl IntoIterator<Item = &'a crate::attention::HeadTrace>) -> f64 {
    traces
        .into_iter()
        .filter_map(|t| t.min_selection_gap())
        .fold(f64::INFINITY, f64::min)
}

/// Tiny TimeExpert used by the suite: L=16, P=S=4, d_model=8, 2 heads, k=2, H=4.
pub fn tiny_model_config() -> ModelConfig {
    let mut cfg = ModelConfig::timeexpert(8, 2, 2, 4);
    cfg.patch = PatchConfig {
        lookback: 16,
        patch_len: 4,
        stride: 4,
    };
    cfg.d_ff = 16;
    cfg.dropout = 0.0;
    cfg
}

fn head_check(seed: u64, h: f64) -> Result<Option<GradientCheck>> {
    let cfg = TmoeConfig {
        d_model: 4,
        num_heads: 1,
        top_k: 2,
        share_global: true,
        causal: false,
        temporal_decay: true,
        variant: AttentionVariant::Tmoe,
    };
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    init_attention_params(&mut store, &mut rng, "attn", &cfg);
    store.insert("x", normal(&mut rng, &[5, 4]));
    store.insert("probe", normal(&mut rng, &[5, 4]));
    *store.get_mut("attn.head0.lambda")? = Tensor::scalar(rng.normal());
    let (_, trace) = tmoe_head_forward(store.get("x")?, &store, "attn", 0, &cfg)?;
    if min_gap([&trace]) <= 10.0 * h {
        return Ok(None);
    }
    let r = grad_check_where(
        |g, s| {
            let x = g.param(s, "x")?;
            let (y, _) = attention_head(g, s, "attn", 0, &cfg, x, None)?;
            let p = g.param(s, "probe")?;
            let py = g.mul(y, p)?;
            g.sum(py)
        },
        &store,
        h,
        |n| n != "probe" && !n.starts_with("attn.out"),
    )?;
    Ok(Some(GradientCheck {
        name: "tmoe_head".into(),
        max_rel_error: r.max_rel_error,
        worst_param: r.worst_param,
        checked: r.checked,
        probe: seed,
    }))
}

fn block_check(seed: u64, h: f64) -> Result<Option<GradientCheck>> {
    let cfg = tiny_model_config();
    let model = Model::new(cfg.clone())?;
    let mut store = model.init_params(seed).cast::<f64>();
    let mut rng = Rng::new(seed ^ 0x5eed);
    store.insert("x", normal(&mut rng, &[4, 8]));
    store.insert("probe", normal(&mut rng, &[4, 8]));
    let (_, traces) = multi_head_tmoe(store.get("x")?, &store, "encoder.0.attn", &cfg.tmoe)?;
    if min_gap(&traces) <= 10.0 * h {
        return Ok(None);
    }
    let r = grad_check_where(
        |g, s| {
            let x = g.param(s, "x")?;
            let (y, _) = encoder_block(g, s, "encoder.0", &cfg, x, &mut ForwardCtx::eval())?;
            let p = g.param(s, "probe")?;
            let py = g.mul(y, p)?;
            g.sum(py)
        },
        &store,
        h,
        |n| n == "x" || n.starts_with("encoder.0."),
    )?;
    Ok(Some(GradientCheck {
        name: "encoder_block".into(),
        max_rel_error: r.max_rel_error,
        worst_param: r.worst_param,
        checked: r.checked,
        probe: seed,
    }))
}

fn model_check(cfg: &ModelConfig, seed: u64, h: f64) -> Result<Option<GradientCheck>> {
    let model = Model::new(cfg.clone())?;
    let store = model.init_params(seed).cast::<f64>();
    let mut rng = Rng::new(seed ^ 0xf00d);
    let window = normal(&mut rng, &[cfg.patch.lookback, 1]);
    let target = normal(&mut rng, &[cfg.horizon, 1]);
    let (_, traces) = model.predict_traced(&store, &window)?;
    if min_gap(traces.iter().flatten().flatten()) <= 10.0 * h {
        return Ok(None);
    }
    let r = grad_check_where(
        |g, s| model.loss(g, s, &window, &target, &mut ForwardCtx::eval()),
        &store,
        h,
        |_| true,
    )?;
    Ok(Some(GradientCheck {
        name: "timeexpert".into(),
        max_rel_error: r.max_rel_error,
        worst_param: r.worst_param,
        checked: r.checked,
        probe: seed,
    }))
}

fn first_probe(
    name: &str,
    seed: u64,
    mut check: impl FnMut(u64) -> Result<Option<GradientCheck>>,
) -> Result<GradientCheck> {
    for s in seed..seed + PROBE_ATTEMPTS {
        if let Some(c) = check(s)? {
            return Ok(c);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no probe point with a stable top-k selection found for {name}"
    )))
}

/// 64-bit finite-difference checks of one TMOE head (including the decay
/// and global-expert parameters), one encoder block and a full TimeExpert
/// of configuration `model` (the tiny configuration if `None`). Probe
/// points are chosen so that no top-k decision sits within `10h` of a tie.
pub fn gradient_suite(model: Option<&ModelConfig>, seed: u64) -> Result<GradientSuite> {
    let h = GRADIENT_STEP;
    let cfg = model.cloned().unwrap_or_else(tiny_model_config);
    let mut cfg = cfg;
    cfg.dropout = 0.0;
    let checks = vec![
        first_probe("tmoe_head", seed, |s| head_check(s, h))?,
        first_probe("encoder_block", seed, |s| block_check(s, h))?,
        first_probe("timeexpert", seed, |s| model_check(&cfg, s, h))?,
    ];
    Ok(GradientSuite { step: h, checks })
}
