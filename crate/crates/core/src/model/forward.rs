use super::config::AttentionMode;
use super::params::{ModelParams, POS_EMB, TOK_EMB};
use crate::error::{Result, SaniError};
use crate::ndtensor::{Tape, Tensor, Var};

/// Parameters registered on a tape, indexed like the store.
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        Self(
            params
                .store
                .tensors()
                .iter()
                .enumerate()
                .map(|(i, t)| tape.param(i, t))
                .collect(),
        )
    }

    pub fn get(&self, index: usize) -> Var {
        self.0[index]
    }
}

/// Final hidden states `[len × d_model]` (after the last layer norm).
pub fn encode(
    tape: &mut Tape,
    params: &ModelParams,
    vars: &ParamVars,
    ids: &[u32],
    mode: AttentionMode,
) -> Result<Var> {
    let cfg = &params.config;
    if ids.is_empty() {
        return Err(SaniError::EmptyDocument);
    }
    if ids.len() > cfg.max_seq {
        return Err(SaniError::SequenceTooLong {
            len: ids.len(),
            max: cfg.max_seq,
        });
    }
    let tok_ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = tape.embed(&tok_ids, vars.get(TOK_EMB))?;
    let pos = tape.embed(&positions, vars.get(POS_EMB))?;
    let mut x = tape.add(tok, pos)?;

    let causal = mode == AttentionMode::Causal;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for layer in 0..cfg.n_layers {
        let b = params.block(layer);
        let h = tape.layer_norm(x, vars.get(b.ln1_gain), vars.get(b.ln1_bias))?;
        let q = tape.linear(h, vars.get(b.q_w), Some(vars.get(b.q_b)))?;
        let k = tape.linear(h, vars.get(b.k_w), Some(vars.get(b.k_b)))?;
        let v = tape.linear(h, vars.get(b.v_w), Some(vars.get(b.v_b)))?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let qh = tape.slice_cols(q, head * dh, dh)?;
            let kh = tape.slice_cols(k, head * dh, dh)?;
            let vh = tape.slice_cols(v, head * dh, dh)?;
            let scores = tape.matmul_bt(qh, kh)?;
            let scores = tape.scale(scores, scale)?;
            let probs = tape.softmax_rows(scores, causal)?;
            heads.push(tape.matmul(probs, vh)?);
        }
        let attn = tape.concat_cols(&heads)?;
        let attn = tape.linear(attn, vars.get(b.o_w), Some(vars.get(b.o_b)))?;
        x = tape.add(x, attn)?;

        let h = tape.layer_norm(x, vars.get(b.ln2_gain), vars.get(b.ln2_bias))?;
        let f = tape.linear(h, vars.get(b.ff1_w), Some(vars.get(b.ff1_b)))?;
        let f = tape.gelu(f)?;
        let f = tape.linear(f, vars.get(b.ff2_w), Some(vars.get(b.ff2_b)))?;
        x = tape.add(x, f)?;
    }
    let (g, bias) = params.ln_f();
    tape.layer_norm(x, vars.get(g), vars.get(bias))
}

/// Head logits for the given rows of `hidden` (all rows when `rows` is None).
pub fn head_logits(
    tape: &mut Tape,
    params: &ModelParams,
    vars: &ParamVars,
    hidden: Var,
    rows: Option<&[usize]>,
) -> Result<Var> {
    let h = match rows {
        Some(r) => tape.select_rows(hidden, r)?,
        None => hidden,
    };
    let (w, b) = params.head();
    tape.linear(h, vars.get(w), Some(vars.get(b)))
}

/// Logits `[len × vocab_size]` for every position.
pub fn forward(params: &ModelParams, ids: &[u32], mode: AttentionMode) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let hidden = encode(&mut tape, params, &vars, ids, mode)?;
    let logits = head_logits(&mut tape, params, &vars, hidden, None)?;
    Ok(tape.value(logits).clone())
}

/// Index of the largest entry of each row; ties resolve to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<u32> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as u32
        })
        .collect()
}
