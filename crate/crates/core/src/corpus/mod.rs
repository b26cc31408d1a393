//! Annotated corpora, vocabulary, blacklists and the synthetic generator.

mod blacklist;
mod document;
mod generate;
mod vocab;

pub use blacklist::{load_blacklist, parse_blacklist_text, Blacklist, Occurrence, Term};
pub use document::{
    pseudonymize, read_jsonl, strip_annotations, split_corpus, to_jsonl, write_jsonl, AnnotatedDocument, Annotation,
    Category, CorpusSplit, RawDocument,
};
pub use generate::{
    generate_synthetic_corpus, planted_counts, GenConfig, GeneratedCorpus, CONF_FILE, CORPUS_FILE,
    DIRECT_FILE, INDIRECT_FILE,
};
pub use vocab::{
    word_pieces, Vocab, BOS_ID, MASK_ID, NUM_SPECIAL, PAD_ID, SPECIAL_TOKENS, UNK_ID,
};

use crate::error::Result;

/// Builds a vocabulary over raw documents.
pub fn build_vocab(docs: &[RawDocument], min_freq: usize) -> Result<Vocab> {
    Vocab::build(docs.iter().map(|d| d.words.as_slice()), min_freq, true)
}

/// Tokenizes every document with `vocab`.
pub fn tokenize_all(docs: &[RawDocument], vocab: &Vocab) -> Result<Vec<AnnotatedDocument>> {
    docs.iter().map(|d| AnnotatedDocument::from_raw(d, vocab)).collect()
}
