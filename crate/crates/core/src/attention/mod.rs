//! Attention kernels: dense scaled dot-product attention, the temporal
//! mix-of-experts (TMOE) mechanism and the random-subset ablation baseline.
//!
//! In TMOE every key-value pair is a local expert. A query scores each
//! candidate by scaled similarity times a learned temporal decay, keeps the
//! top-k, optionally appends a shared global expert pooled from the whole
//! sequence, and mixes the survivors with softmax gates.

mod config;
mod layer;
mod ops;
mod scoring;
mod trace;

pub use config::{AttentionVariant, TmoeConfig};
pub use layer::{
    attention_head, head_key, init_attention_params, multi_head_attention, multi_head_tmoe,
    tmoe_head_forward, unit_decay_lambda,
};
pub use ops::{softmax_pool, sparse_expert_attention, Selection};
pub use scoring::{
    global_expert_summary, local_expert_scores, random_attention_forward, select_local_experts,
    temporal_relevance, vanilla_attention,
};
pub use trace::{selection_fraction, Expert, HeadTrace, QueryTrace};
