use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
}

/// How actor and scene tokens are related.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One self-attention stack over the concatenated actor and scene tokens.
    Unified,
    /// Actor tokens cross-attend into fixed scene tokens.
    DecoderOnly,
    /// Scene self-attention encoder, then actor decoder blocks.
    EncoderDecoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub pre_norm: bool,
    pub activation: Activation,
    pub variant: Variant,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 256,
            layers: 6,
            heads: 8,
            ffn_dim: 1024,
            dropout: 0.1,
            attention_dropout: 0.1,
            pre_norm: true,
            activation: Activation::Gelu,
            variant: Variant::Unified,
            num_classes: 12,
        }
    }
}

impl ModelConfig {
    /// Scaled-down preset that trains in minutes on a single CPU core.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            ..ModelConfig::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.ffn_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.embed_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be even for the positional encoding",
                self.embed_dim
            )));
        }
        for (name, p) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        Ok(())
    }
}
