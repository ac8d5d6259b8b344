//! TimeExpert (patch encoder with a flatten head) and TimeExpert-G (causal
//! next-segment predictor), both built on TMOE encoder blocks.
//!
//! Channels are processed independently with shared weights.

mod config;
mod encoder;
mod forecaster;
mod norm;
mod patch;

pub use config::{ModelConfig, ModelVariant, PatchConfig, MAX_SEGMENTS, SEGMENT_LEN};
pub use encoder::{encoder_block, init_encoder_params, LN_EPS};
pub use forecaster::{ChannelTraces, ForwardCtx, ForwardOutput, Model};
pub use norm::{denormalize, instance_normalize, WindowStats, NORM_EPS};
pub use patch::{embed_patches, patchify};
