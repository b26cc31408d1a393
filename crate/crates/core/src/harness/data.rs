use super::config::{Curve, ExperimentConfig, Target};
use crate::corpus::{
    build_vocab, load_blacklist, pseudonymize, read_jsonl, split_corpus, strip_annotations,
    tokenize_all, AnnotatedDocument, Blacklist, RawDocument, Vocab,
};
use crate::error::Result;
use crate::metrics::Evaluator;
use crate::model::Variant;
use crate::objectives::{prepare_documents, TrainingSet};

/// Corpus, splits, blacklists and training sets of one experiment for one
/// model variant. Blacklist repetitions are counted on the prepared
/// (chunked) training documents the evaluator reads.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub variant: Variant,
    pub vocab: Vocab,
    pub raw_train: Vec<RawDocument>,
    pub heldout: Vec<AnnotatedDocument>,
    pub identifiers: Blacklist,
    pub conf: Blacklist,
    /// Raw training documents.
    pub train: TrainingSet,
    /// Direct identifiers replaced by a placeholder.
    pub anonymized: TrainingSet,
    /// Raw documents with the target blacklist excluded from the objective.
    pub private: TrainingSet,
    /// Every annotated span removed; trains the epoch-0 model.
    pub base: TrainingSet,
}

impl ExperimentData {
    pub fn load(cfg: &ExperimentConfig, variant: Variant) -> Result<Self> {
        let docs = read_jsonl(&cfg.corpus)?;
        let anonymized: Vec<RawDocument> = docs.iter().map(pseudonymize).collect();
        let mut all = docs.clone();
        all.extend(anonymized);
        let vocab = build_vocab(&all, cfg.min_freq)?;

        let split = split_corpus(&docs, cfg.heldout_fraction, cfg.split_seed)?;
        let max_seq = cfg.model.max_seq;
        let train = TrainingSet::new(&tokenize_all(&split.train, &vocab)?, None, variant, max_seq)?;
        let heldout = prepare_documents(&tokenize_all(&split.heldout, &vocab)?, variant, max_seq)?;

        let direct = load_blacklist(&cfg.blacklists.direct, &vocab, train.docs())?;
        let indirect = load_blacklist(&cfg.blacklists.indirect, &vocab, train.docs())?;
        let identifiers = Blacklist::union(&[&direct, &indirect], &vocab, train.docs())?;
        let conf = load_blacklist(&cfg.blacklists.conf, &vocab, train.docs())?;

        let anon_raw: Vec<RawDocument> = split.train.iter().map(pseudonymize).collect();
        let anonymized = TrainingSet::new(&tokenize_all(&anon_raw, &vocab)?, None, variant, max_seq)?;
        let target = match cfg.target {
            Target::Identifiers => &identifiers,
            Target::Confidential => &conf,
        };
        let private = TrainingSet::new(train.docs(), Some(target), variant, max_seq)?;
        let stripped: Vec<RawDocument> = split.train.iter().map(strip_annotations).collect();
        let base = TrainingSet::new(&tokenize_all(&stripped, &vocab)?, None, variant, max_seq)?;

        log::info!(
            "{variant:?} data: vocab {}, {} training chunks, {} held-out chunks, {} identifiers, {} confidential terms",
            vocab.len(),
            train.len(),
            heldout.len(),
            identifiers.len(),
            conf.len()
        );
        Ok(Self {
            variant,
            vocab,
            raw_train: split.train,
            heldout,
            identifiers,
            conf,
            train,
            anonymized,
            private,
            base,
        })
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            train: self.train.docs(),
            heldout: &self.heldout,
            identifiers: &self.identifiers,
            conf: &self.conf,
        }
    }

    /// Training set a curve fine-tunes on.
    pub fn set_for(&self, curve: Curve) -> &TrainingSet {
        match curve {
            Curve::Mlm | Curve::Clm => &self.train,
            Curve::MlmAnon | Curve::ClmAnon => &self.anonymized,
            Curve::Ppmlm | Curve::Ppclm => &self.private,
        }
    }
}
