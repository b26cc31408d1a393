use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::corpus::{AnnotatedDocument, BOS_ID, MASK_ID};
use crate::error::{Result, SaniError};
use crate::model::{encode, head_logits, ModelParams, ParamVars, Variant};
use crate::ndtensor::Tape;
use crate::objectives::MASK_RATE;
use crate::seeding::{rng_for, stream};

/// Passes needed to mask every unit once at the masking rate.
pub fn num_passes(rate: f64) -> usize {
    (1.0 / rate - 1e-9).ceil() as usize
}

/// Top-1 prediction for each token of each document, with the pass that
/// produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocPredictions {
    pub predicted: Vec<Option<u32>>,
    pub pass: Vec<usize>,
}

pub type PredictionTable = Vec<DocPredictions>;

/// Masking units of a document: each annotated span is one unit, every
/// other word is its own unit. Returned as word ranges in document order.
pub fn masking_units(doc: &AnnotatedDocument) -> Vec<(usize, usize)> {
    let mut units = Vec::new();
    let mut w = 0;
    while w < doc.num_words() {
        let end = doc
            .annotations
            .iter()
            .filter(|a| a.start == w)
            .map(|a| a.end())
            .max()
            .unwrap_or(w + 1);
        units.push((w, end));
        w = end;
    }
    units
}

/// Pass index of every unit of document `index`.
pub fn unit_passes(doc: &AnnotatedDocument, index: usize, passes: usize) -> Vec<usize> {
    let n = masking_units(doc).len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(&[stream::EVAL_PARTITION, index as u64]));
    let mut pass = vec![0; n];
    for (rank, &u) in order.iter().enumerate() {
        pass[u] = rank % passes;
    }
    pass
}

fn mlm_document(params: &ModelParams, doc: &AnnotatedDocument, index: usize) -> Result<DocPredictions> {
    let passes = num_passes(MASK_RATE);
    let units = masking_units(doc);
    let unit_pass = unit_passes(doc, index, passes);
    let mut predicted = vec![None; doc.num_tokens()];
    let mut pass_of = vec![0; doc.num_tokens()];
    for p in 0..passes {
        let mut input = Vec::with_capacity(doc.num_tokens() + 1);
        input.push(BOS_ID);
        input.extend_from_slice(&doc.token_ids);
        let mut masked = Vec::new();
        for (u, &(a, b)) in units.iter().enumerate() {
            if unit_pass[u] != p {
                continue;
            }
            for t in doc.token_range(a, b - a) {
                input[t + 1] = MASK_ID;
                masked.push(t);
            }
        }
        if masked.is_empty() {
            continue;
        }
        let rows: Vec<usize> = masked.iter().map(|t| t + 1).collect();
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params);
        let hidden = encode(&mut tape, params, &vars, &input, params.config.variant.attention())?;
        let logits = head_logits(&mut tape, params, &vars, hidden, Some(&rows))?;
        let top = crate::model::argmax_rows(tape.value(logits));
        for (&t, &id) in masked.iter().zip(&top) {
            predicted[t] = Some(id);
            pass_of[t] = p;
        }
    }
    Ok(DocPredictions {
        predicted,
        pass: pass_of,
    })
}

fn clm_document(params: &ModelParams, doc: &AnnotatedDocument) -> Result<DocPredictions> {
    let n = doc.num_tokens();
    let mut predicted = vec![None; n];
    if n >= 2 {
        let input = &doc.token_ids[..n - 1];
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, params);
        let hidden = encode(&mut tape, params, &vars, input, params.config.variant.attention())?;
        let logits = head_logits(&mut tape, params, &vars, hidden, None)?;
        for (t, id) in crate::model::argmax_rows(tape.value(logits)).into_iter().enumerate() {
            predicted[t + 1] = Some(id);
        }
    }
    Ok(DocPredictions {
        predicted,
        pass: vec![0; n],
    })
}

/// Masked-prediction sweep: every document's units are split into
/// `ceil(1 / 0.15)` passes by a fixed per-document shuffle, so each token is
/// masked exactly once.
pub fn eval_pass_mlm(params: &ModelParams, docs: &[AnnotatedDocument]) -> Result<PredictionTable> {
    params.config.variant.expect(Variant::Mlm)?;
    docs.par_iter()
        .enumerate()
        .map(|(i, d)| mlm_document(params, d, i))
        .collect()
}

/// Teacher-forced next-token predictions; the first token of a document has
/// none.
pub fn eval_pass_clm(params: &ModelParams, docs: &[AnnotatedDocument]) -> Result<PredictionTable> {
    params.config.variant.expect(Variant::Clm)?;
    docs.par_iter().map(|d| clm_document(params, d)).collect()
}

/// The sweep matching the model's variant.
pub fn predict_corpus(params: &ModelParams, docs: &[AnnotatedDocument]) -> Result<PredictionTable> {
    if docs.is_empty() {
        return Err(SaniError::EmptyCorpus);
    }
    match params.config.variant {
        Variant::Mlm => eval_pass_mlm(params, docs),
        Variant::Clm => eval_pass_clm(params, docs),
    }
}
