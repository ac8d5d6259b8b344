use serde::{Deserialize, Serialize};

use crate::attention::{AttentionVariant, TmoeConfig};
use crate::error::{Error, Result};

/// Segment length of the generative variant.
pub const SEGMENT_LEN: usize = 96;
/// Largest context the generative variant accepts, in segments.
pub const MAX_SEGMENTS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchConfig {
    pub lookback: usize,
    pub patch_len: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            patch_len: 16,
            stride: 8,
        }
    }
}

impl PatchConfig {
    /// Tokens produced from one lookback window: `(L - P) / S + 1`.
    pub fn num_tokens(&self) -> usize {
        if self.patch_len > self.lookback || self.stride == 0 {
            return 0;
        }
        (self.lookback - self.patch_len) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_len == 0 || self.stride == 0 {
            return Err(Error::Config("patch_len and stride must be positive".into()));
        }
        if self.patch_len > self.lookback {
            return Err(Error::Config(format!(
                "patch_len {} exceeds lookback {}",
                self.patch_len, self.lookback
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Encoder with a flatten head over patch tokens.
    #[serde(rename = "timeexpert")]
    TimeExpert,
    /// Causal next-segment predictor over 96-point segment tokens.
    #[serde(rename = "timeexpert_g")]
    TimeExpertG,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub patch: PatchConfig,
    pub tmoe: TmoeConfig,
    pub num_layers: usize,
    pub d_ff: usize,
    pub horizon: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::TimeExpert,
            patch: PatchConfig::default(),
            tmoe: TmoeConfig::default(),
            num_layers: 2,
            d_ff: 256,
            horizon: 96,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// TimeExpert with the given width; `d_ff = 2 * d_model`.
    pub fn timeexpert(d_model: usize, num_heads: usize, top_k: usize, horizon: usize) -> Self {
        Self {
            tmoe: TmoeConfig {
                d_model,
                num_heads,
                top_k,
                ..TmoeConfig::default()
            },
            d_ff: 2 * d_model,
            horizon,
            ..Self::default()
        }
    }

    /// TimeExpert-G reading `segments` segments of context.
    pub fn timeexpert_g(d_model: usize, num_heads: usize, top_k: usize, segments: usize) -> Self {
        Self {
            variant: ModelVariant::TimeExpertG,
            patch: PatchConfig {
                lookback: segments * SEGMENT_LEN,
                patch_len: SEGMENT_LEN,
                stride: SEGMENT_LEN,
            },
            tmoe: TmoeConfig {
                d_model,
                num_heads,
                top_k,
                causal: true,
                ..TmoeConfig::default()
            },
            d_ff: 2 * d_model,
            horizon: SEGMENT_LEN,
            ..Self::default()
        }
    }

    pub fn d_model(&self) -> usize {
        self.tmoe.d_model
    }

    pub fn num_tokens(&self) -> usize {
        self.patch.num_tokens()
    }

    /// Rows of the learnable positional table.
    pub fn max_tokens(&self) -> usize {
        match self.variant {
            ModelVariant::TimeExpert => self.num_tokens(),
            ModelVariant::TimeExpertG => MAX_SEGMENTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        self.tmoe.validate()?;
        if self.num_layers == 0 {
            return Err(Error::Config("num_layers must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.variant == ModelVariant::TimeExpertG {
            let p = &self.patch;
            if p.patch_len != p.stride || p.lookback % p.patch_len != 0 {
                return Err(Error::Config(
                    "generative variant needs non-overlapping segments that tile the context".into(),
                ));
            }
            if p.lookback / p.patch_len > MAX_SEGMENTS {
                return Err(Error::Config(format!(
                    "context of {} segments exceeds {MAX_SEGMENTS}",
                    p.lookback / p.patch_len
                )));
            }
            if !self.tmoe.causal {
                return Err(Error::Config("generative variant requires causal attention".into()));
            }
        }
        Ok(())
    }

    pub fn attention_variant(&self) -> AttentionVariant {
        self.tmoe.variant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_token_count() {
        assert_eq!(PatchConfig::default().num_tokens(), 11);
        let p = PatchConfig {
            lookback: 16,
            patch_len: 16,
            stride: 3,
        };
        assert_eq!(p.num_tokens(), 1);
        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn generative_constraints() {
        let g = ModelConfig::timeexpert_g(16, 2, 2, 3);
        assert!(g.validate().is_ok());
        assert_eq!(g.num_tokens(), 3);
        assert!(ModelConfig::timeexpert_g(16, 2, 2, 16).validate().is_err());
        let mut bad = g.clone();
        bad.tmoe.causal = false;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ModelConfig::timeexpert(64, 4, 8, 96);
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"timeexpert\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), cfg);
    }
}
