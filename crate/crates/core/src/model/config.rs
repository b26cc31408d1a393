use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaniError};

/// Encoder with a masked-LM head, or decoder with a next-token head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "MLM")]
    Mlm,
    #[serde(rename = "CLM")]
    Clm,
}

impl Variant {
    pub fn attention(self) -> AttentionMode {
        match self {
            Variant::Mlm => AttentionMode::Bidirectional,
            Variant::Clm => AttentionMode::Causal,
        }
    }

    /// Configuration error unless `self` is `required`.
    pub fn expect(self, required: Variant) -> Result<()> {
        if self != required {
            return Err(SaniError::Config(format!(
                "a {required} model is required, found a {self} model"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mlm => "MLM",
            Variant::Clm => "CLM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Bidirectional,
    Causal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale defaults: 2 layers, 4 heads, width 64, feed-forward 256,
    /// 64 positions.
    pub fn desk(variant: Variant, vocab_size: usize, seed: u64) -> Self {
        Self {
            variant,
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
            max_seq: 64,
            vocab_size,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("max_seq", self.max_seq),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(SaniError::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(SaniError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_seq < 2 {
            return Err(SaniError::Config("max_seq must be at least 2".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
