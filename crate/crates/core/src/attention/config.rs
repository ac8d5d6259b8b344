use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which attention kernel an encoder layer runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// Dense scaled dot-product attention.
    Full,
    /// `k` uniformly random experts per query; ablation baseline only.
    Random,
    /// Temporal mix of experts.
    Tmoe,
}

impl AttentionVariant {
    pub fn label(self) -> &'static str {
        match self {
            AttentionVariant::Full => "full",
            AttentionVariant::Random => "random",
            AttentionVariant::Tmoe => "tmoe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmoeConfig {
    pub d_model: usize,
    pub num_heads: usize,
    pub top_k: usize,
    pub share_global: bool,
    pub causal: bool,
    /// When false, the temporal relevance factor is fixed at 1.
    pub temporal_decay: bool,
    pub variant: AttentionVariant,
}

impl Default for TmoeConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            num_heads: 8,
            top_k: 8,
            share_global: true,
            causal: false,
            temporal_decay: true,
            variant: AttentionVariant::Tmoe,
        }
    }
}

impl TmoeConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.num_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_heads == 0 || self.d_model == 0 {
            return Err(Error::Config("d_model and num_heads must be positive".into()));
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.num_heads
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }
}
