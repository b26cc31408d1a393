//! Shared fixtures for unit tests.

use crate::corpus::{
    build_vocab, generate_synthetic_corpus, tokenize_all, AnnotatedDocument, Blacklist, GenConfig,
    Vocab,
};
use crate::model::{ModelConfig, ModelParams, Variant};

pub(crate) struct Fixture {
    pub vocab: Vocab,
    pub docs: Vec<AnnotatedDocument>,
    pub identifiers: Blacklist,
    pub conf: Blacklist,
}

pub(crate) fn small_gen() -> GenConfig {
    GenConfig {
        n_docs: 40,
        words_per_doc: 30,
        n_direct: 8,
        n_indirect: 8,
        n_conf: 5,
        repetition_law: 1.0,
        seed: 3,
    }
}

pub(crate) fn fixture_from(cfg: &GenConfig) -> Fixture {
    let g = generate_synthetic_corpus(cfg).unwrap();
    let vocab = build_vocab(&g.docs, 1).unwrap();
    let docs = tokenize_all(&g.docs, &vocab).unwrap();
    let mut ids = g.direct.clone();
    ids.extend(g.indirect.iter().cloned());
    let identifiers = Blacklist::new(ids, &vocab, &docs).unwrap();
    let conf = Blacklist::new(g.conf.clone(), &vocab, &docs).unwrap();
    Fixture {
        vocab,
        docs,
        identifiers,
        conf,
    }
}

pub(crate) fn fixture() -> Fixture {
    fixture_from(&small_gen())
}

pub(crate) fn tiny_config(variant: Variant, vocab_size: usize) -> ModelConfig {
    ModelConfig {
        variant,
        n_layers: 1,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_seq: 64,
        vocab_size,
        seed: 11,
    }
}

pub(crate) fn tiny_model(variant: Variant, vocab_size: usize) -> ModelParams {
    ModelParams::init(&tiny_config(variant, vocab_size)).unwrap()
}
