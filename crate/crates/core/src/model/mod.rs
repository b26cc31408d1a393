//! Small pre-LN transformer in encoder (MLM) and decoder (CLM) flavours.
//!
//! Learned token and position embeddings, `n_layers` blocks of multi-head
//! self-attention and a GELU feed-forward, a final layer norm, and an untied
//! linear head over the vocabulary.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{AttentionMode, ModelConfig, Variant};
pub use forward::{argmax_rows, encode, forward, head_logits, ParamVars};
pub use params::{
    param_layout, BlockIndex, ModelParams, BLOCK_PARAMS, HEAD_BIAS, HEAD_WEIGHT, INIT_STD,
    POS_EMB, TOK_EMB,
};

#[cfg(test)]
mod tests;
