//! Fixtures shared by the benchmarks.

use sani_core::corpus::{build_vocab, generate_synthetic_corpus, tokenize_all, AnnotatedDocument, GenConfig, Vocab};
use sani_core::model::{ModelConfig, ModelParams, Variant};

pub struct Setup {
    pub vocab: Vocab,
    pub docs: Vec<AnnotatedDocument>,
    pub params: ModelParams,
}

/// Desk-size model over a corpus of `n_docs` default-length documents.
pub fn setup(variant: Variant, n_docs: usize) -> Setup {
    let g = generate_synthetic_corpus(&GenConfig {
        n_docs,
        n_direct: 20,
        n_indirect: 20,
        n_conf: 10,
        ..GenConfig::default()
    })
    .expect("generator config is valid");
    let vocab = build_vocab(&g.docs, 1).expect("vocabulary");
    let docs = tokenize_all(&g.docs, &vocab).expect("tokenized");
    let params = ModelParams::init(&ModelConfig::desk(variant, vocab.len(), 1)).expect("model");
    Setup { vocab, docs, params }
}
