use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::Result;
use crate::ndtensor::{ParamStore, Tensor};

pub const INIT_STD: f64 = 0.02;

/// Parameters per transformer block, in enumeration order.
pub const BLOCK_PARAMS: [&str; 16] = [
    "ln1.gain",
    "ln1.bias",
    "attn.q.weight",
    "attn.q.bias",
    "attn.k.weight",
    "attn.k.bias",
    "attn.v.weight",
    "attn.v.bias",
    "attn.o.weight",
    "attn.o.bias",
    "ln2.gain",
    "ln2.bias",
    "ff1.weight",
    "ff1.bias",
    "ff2.weight",
    "ff2.bias",
];

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

/// Indices of one block's parameters inside the store.
#[derive(Debug, Clone, Copy)]
pub struct BlockIndex {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub q_w: usize,
    pub q_b: usize,
    pub k_w: usize,
    pub k_b: usize,
    pub v_w: usize,
    pub v_b: usize,
    pub o_w: usize,
    pub o_b: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
}

impl BlockIndex {
    fn at(base: usize) -> Self {
        Self {
            ln1_gain: base,
            ln1_bias: base + 1,
            q_w: base + 2,
            q_b: base + 3,
            k_w: base + 4,
            k_b: base + 5,
            v_w: base + 6,
            v_b: base + 7,
            o_w: base + 8,
            o_b: base + 9,
            ln2_gain: base + 10,
            ln2_bias: base + 11,
            ff1_w: base + 12,
            ff1_b: base + 13,
            ff2_w: base + 14,
            ff2_b: base + 15,
        }
    }
}

pub const TOK_EMB: usize = 0;
pub const POS_EMB: usize = 1;

/// All transformer weights. The head (`head.weight` `[vocab × d_model]`,
/// `head.bias` `[vocab]`) closes the layout; a task head may be appended.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
}

/// `(name, shape)` of every parameter for `cfg`, in enumeration order.
pub fn param_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
    let mut out = vec![
        ("tok_emb".to_string(), vec![v, d]),
        ("pos_emb".to_string(), vec![cfg.max_seq, d]),
    ];
    for l in 0..cfg.n_layers {
        for name in BLOCK_PARAMS {
            let shape = match name {
                "ff1.weight" => vec![f, d],
                "ff1.bias" => vec![f],
                "ff2.weight" => vec![d, f],
                n if n.ends_with(".weight") => vec![d, d],
                _ => vec![d],
            };
            out.push((format!("layers.{l}.{name}"), shape));
        }
    }
    out.push(("ln_f.gain".into(), vec![d]));
    out.push(("ln_f.bias".into(), vec![d]));
    out.push((HEAD_WEIGHT.into(), vec![v, d]));
    out.push((HEAD_BIAS.into(), vec![v]));
    out
}

impl ModelParams {
    /// Seeded initialization: matrices ~ N(0, 0.02²), gains 1, biases 0.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut store = ParamStore::new();
        for (name, shape) in param_layout(cfg) {
            let t = if name.ends_with(".gain") {
                Tensor::filled(&shape, 1.0)
            } else if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                let n = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| normal.sample(&mut rng)).collect())?
            };
            store.push(name, t);
        }
        Ok(Self {
            config: cfg.clone(),
            store,
        })
    }

    pub fn block(&self, layer: usize) -> BlockIndex {
        BlockIndex::at(2 + layer * BLOCK_PARAMS.len())
    }

    pub fn ln_f(&self) -> (usize, usize) {
        let base = 2 + self.config.n_layers * BLOCK_PARAMS.len();
        (base, base + 1)
    }

    /// Indices of the last linear layer: `(weight, bias)`.
    pub fn head(&self) -> (usize, usize) {
        let (_, ln_bias) = self.ln_f();
        (ln_bias + 1, ln_bias + 2)
    }

    /// Number of entries of the transformer layout; task heads may follow.
    pub fn base_len(&self) -> usize {
        self.head().1 + 1
    }

    pub fn num_scalars(&self) -> usize {
        self.store.num_scalars()
    }
}
