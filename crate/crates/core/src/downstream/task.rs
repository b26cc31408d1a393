use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedDocument, Vocab, BOS_ID};
use crate::error::{Result, SaniError};
use crate::seeding::{rng_for, stream};

/// One classification example: encoder input (starting with BOS) and label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub token_ids: Vec<u32>,
    pub label: usize,
}

/// On-disk form of a labeled example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledRecord {
    pub words: Vec<String>,
    pub label: usize,
}

impl LabeledRecord {
    pub fn encode(&self, vocab: &Vocab) -> LabeledExample {
        let mut token_ids = vec![BOS_ID];
        for w in &self.words {
            token_ids.extend(vocab.encode_word(w));
        }
        LabeledExample {
            token_ids,
            label: self.label,
        }
    }
}

pub fn read_labeled_jsonl(path: &Path) -> Result<Vec<LabeledRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| SaniError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| SaniError::json(format!("{} line {}", path.display(), i + 1), e))
        })
        .collect()
}

pub fn write_labeled_jsonl(path: &Path, records: &[LabeledRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| SaniError::io(path, e))
}

/// Marker-word classification task: the class of an example is the marker
/// word inserted into an otherwise unlabeled corpus window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerTask {
    pub markers: Vec<String>,
    pub train: Vec<LabeledRecord>,
    pub test: Vec<LabeledRecord>,
}

/// `k` words from the middle of the frequency ranking, never inside an
/// annotated span and made of a single token.
pub fn choose_markers(docs: &[AnnotatedDocument], vocab: &Vocab, k: usize) -> Result<Vec<String>> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    let mut sensitive: HashSet<&str> = HashSet::new();
    for d in docs {
        for a in &d.annotations {
            sensitive.extend(d.words[a.start..a.end()].iter().map(String::as_str));
        }
        for w in &d.words {
            *freq.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|(w, _)| !sensitive.contains(w) && vocab.encode_word(w).len() == 1)
        .filter(|(w, _)| vocab.id(w).is_some_and(|id| !Vocab::is_special(id)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if ranked.len() < k {
        return Err(SaniError::Config(format!(
            "only {} candidate marker words for {k} classes",
            ranked.len()
        )));
    }
    let start = (ranked.len() - k) / 2;
    Ok(ranked[start..start + k].iter().map(|(w, _)| w.to_string()).collect())
}

fn make_examples(
    docs: &[AnnotatedDocument],
    markers: &[String],
    count: usize,
    max_words: usize,
    seed: u64,
    split: u64,
) -> Vec<LabeledRecord> {
    let usable: Vec<&AnnotatedDocument> = docs.iter().filter(|d| !d.is_empty()).collect();
    let mut rng = rng_for(&[seed, stream::TASK, split]);
    (0..count)
        .map(|i| {
            let label = i % markers.len();
            let doc = usable.choose(&mut rng).expect("non-empty pool");
            let mut words: Vec<String> = doc
                .words
                .iter()
                .filter(|w| !markers.contains(w))
                .take(max_words - 1)
                .cloned()
                .collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, markers[label].clone());
            LabeledRecord { words, label }
        })
        .collect()
}

/// Builds a balanced `k`-class task. Windows come from `train_docs` and
/// `test_docs` respectively and are cut to `max_words` words including the
/// marker.
pub fn build_marker_task(
    train_docs: &[AnnotatedDocument],
    test_docs: &[AnnotatedDocument],
    vocab: &Vocab,
    k: usize,
    n_train: usize,
    n_test: usize,
    max_words: usize,
    seed: u64,
) -> Result<MarkerTask> {
    if train_docs.iter().all(|d| d.is_empty()) || test_docs.iter().all(|d| d.is_empty()) {
        return Err(SaniError::EmptyLabeledSet);
    }
    if k < 2 || max_words < 2 {
        return Err(SaniError::Config("a task needs at least 2 classes and 2 words".into()));
    }
    let markers = choose_markers(train_docs, vocab, k)?;
    Ok(MarkerTask {
        train: make_examples(train_docs, &markers, n_train, max_words, seed, 0),
        test: make_examples(test_docs, &markers, n_test, max_words, seed, 1),
        markers,
    })
}
