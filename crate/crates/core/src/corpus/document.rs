use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Result, SaniError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "DIRECT")]
    Direct,
    #[serde(rename = "INDIRECT")]
    Indirect,
    #[serde(rename = "CONF")]
    Conf,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Direct => "DIRECT",
            Category::Indirect => "INDIRECT",
            Category::Conf => "CONF",
        })
    }
}

/// A tagged span of whole words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub start: usize,
    pub len: usize,
    pub cat: Category,
}

impl Annotation {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// One line of a corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDocument {
    pub id: String,
    pub words: Vec<String>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl RawDocument {
    /// Checks that spans are non-empty, inside the document and disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut spans: Vec<&Annotation> = self.annotations.iter().collect();
        spans.sort_by_key(|a| a.start);
        let mut last_end = 0;
        for (i, a) in spans.iter().enumerate() {
            if a.len == 0 || a.end() > self.words.len() {
                return Err(SaniError::Config(format!(
                    "document {}: span ({}, {}) outside {} words",
                    self.id,
                    a.start,
                    a.len,
                    self.words.len()
                )));
            }
            if i > 0 && a.start < last_end {
                return Err(SaniError::Config(format!(
                    "document {}: overlapping spans at word {}",
                    self.id, a.start
                )));
            }
            last_end = a.end();
        }
        Ok(())
    }

    pub fn span_words(&self, a: &Annotation) -> &[String] {
        &self.words[a.start..a.end()]
    }
}

/// Replaces every DIRECT span by the single word `X` and re-indexes the
/// remaining annotations.
pub fn pseudonymize(doc: &RawDocument) -> RawDocument {
    let mut spans = doc.annotations.clone();
    spans.sort_by_key(|a| a.start);
    if !spans.iter().any(|a| a.cat == Category::Direct) {
        return doc.clone();
    }
    let mut words = Vec::with_capacity(doc.words.len());
    let mut annotations = Vec::with_capacity(spans.len());
    let mut cursor = 0;
    for a in &spans {
        words.extend_from_slice(&doc.words[cursor..a.start]);
        if a.cat == Category::Direct {
            words.push("X".to_string());
        } else {
            annotations.push(Annotation {
                start: words.len(),
                len: a.len,
                cat: a.cat,
            });
            words.extend_from_slice(&doc.words[a.start..a.end()]);
        }
        cursor = a.end();
    }
    words.extend_from_slice(&doc.words[cursor..]);
    RawDocument {
        id: doc.id.clone(),
        words,
        annotations,
    }
}

/// Drops every annotated span, leaving text free of sensitive terms.
pub fn strip_annotations(doc: &RawDocument) -> RawDocument {
    let mut keep = vec![true; doc.words.len()];
    for a in &doc.annotations {
        keep[a.start..a.end()].iter_mut().for_each(|k| *k = false);
    }
    RawDocument {
        id: doc.id.clone(),
        words: doc
            .words
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(w, _)| w.clone())
            .collect(),
        annotations: vec![],
    }
}

/// A tokenized document. `word_starts[w]..word_starts[w + 1]` are the token
/// positions of word `w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDocument {
    pub id: String,
    pub words: Vec<String>,
    pub token_ids: Vec<u32>,
    pub word_starts: Vec<usize>,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedDocument {
    pub fn from_raw(raw: &RawDocument, vocab: &Vocab) -> Result<Self> {
        raw.validate()?;
        let mut token_ids = Vec::with_capacity(raw.words.len());
        let mut word_starts = Vec::with_capacity(raw.words.len() + 1);
        for w in &raw.words {
            word_starts.push(token_ids.len());
            token_ids.extend(vocab.encode_word(w));
        }
        word_starts.push(token_ids.len());
        let mut annotations = raw.annotations.clone();
        annotations.sort_by_key(|a| a.start);
        Ok(Self {
            id: raw.id.clone(),
            words: raw.words.clone(),
            token_ids,
            word_starts,
            annotations,
        })
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_tokens(&self, w: usize) -> &[u32] {
        &self.token_ids[self.word_starts[w]..self.word_starts[w + 1]]
    }

    /// Token positions covered by words `start..start + len`.
    pub fn token_range(&self, start: usize, len: usize) -> Range<usize> {
        self.word_starts[start]..self.word_starts[start + len]
    }

    pub fn to_raw(&self) -> RawDocument {
        RawDocument {
            id: self.id.clone(),
            words: self.words.clone(),
            annotations: self.annotations.clone(),
        }
    }

    /// Word sequence recovered from the token ids.
    pub fn detokenize(&self, vocab: &Vocab) -> Vec<String> {
        (0..self.num_words())
            .map(|w| vocab.decode_word(self.word_tokens(w)))
            .collect()
    }

    /// Splits into pieces of at most `max_tokens` tokens at word boundaries,
    /// never cutting through an annotation span.
    pub fn chunk(&self, max_tokens: usize) -> Result<Vec<AnnotatedDocument>> {
        if self.num_tokens() <= max_tokens {
            return Ok(vec![self.clone()]);
        }
        // A word may end a chunk only if no annotation straddles the cut.
        let cuttable = |w: usize| !self.annotations.iter().any(|a| a.start < w && w < a.end());
        let mut chunks = Vec::new();
        let mut start = 0;
        while start < self.num_words() {
            let mut end = start;
            let mut best = None;
            while end < self.num_words()
                && self.word_starts[end + 1] - self.word_starts[start] <= max_tokens
            {
                end += 1;
                if cuttable(end) {
                    best = Some(end);
                }
            }
            let Some(cut) = best else {
                return Err(SaniError::SequenceTooLong {
                    len: self.word_starts[end.min(self.num_words())] - self.word_starts[start],
                    max: max_tokens,
                });
            };
            chunks.push(self.slice_words(start, cut, chunks.len()));
            start = cut;
        }
        Ok(chunks)
    }

    fn slice_words(&self, start: usize, end: usize, index: usize) -> AnnotatedDocument {
        let base = self.word_starts[start];
        AnnotatedDocument {
            id: format!("{}#{index}", self.id),
            words: self.words[start..end].to_vec(),
            token_ids: self.token_ids[base..self.word_starts[end]].to_vec(),
            word_starts: self.word_starts[start..=end].iter().map(|s| s - base).collect(),
            annotations: self
                .annotations
                .iter()
                .filter(|a| a.start >= start && a.end() <= end)
                .map(|a| Annotation {
                    start: a.start - start,
                    ..*a
                })
                .collect(),
        }
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let file = std::fs::File::open(path).map_err(|e| SaniError::io(path, e))?;
    let mut docs = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SaniError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line)
            .map_err(|e| SaniError::json(format!("{}:{}", path.display(), n + 1), e))?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn to_jsonl(docs: &[RawDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("documents serialize"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| SaniError::io(path, e))?;
    f.write_all(to_jsonl(docs).as_bytes())
        .map_err(|e| SaniError::io(path, e))
}

/// Disjoint train / held-out partition of a corpus.
#[derive(Debug, Clone)]
pub struct CorpusSplit<D> {
    pub train: Vec<D>,
    pub heldout: Vec<D>,
    pub fraction_heldout: f64,
}

/// Seeded split; both parts keep the original document order.
pub fn split_corpus<D: Clone>(docs: &[D], fraction_heldout: f64, seed: u64) -> Result<CorpusSplit<D>> {
    if !(fraction_heldout > 0.0 && fraction_heldout < 1.0) {
        return Err(SaniError::Config(format!(
            "heldout fraction {fraction_heldout} must lie in (0, 1)"
        )));
    }
    if docs.len() < 2 {
        return Err(SaniError::Config(
            "a split needs at least two documents".into(),
        ));
    }
    let n_held = ((docs.len() as f64 * fraction_heldout).round() as usize).clamp(1, docs.len() - 1);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; docs.len()];
    for &i in &order[..n_held] {
        held[i] = true;
    }
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for (d, h) in docs.iter().zip(held) {
        if h {
            heldout.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    Ok(CorpusSplit {
        train,
        heldout,
        fraction_heldout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str, ann: &[(usize, usize, Category)]) -> RawDocument {
        RawDocument {
            id: "d".into(),
            words: text.split_whitespace().map(String::from).collect(),
            annotations: ann
                .iter()
                .map(|&(start, len, cat)| Annotation { start, len, cat })
                .collect(),
        }
    }

    #[test]
    fn stripping_removes_every_span() {
        let d = raw(
            "john smith has flu in town",
            &[(0, 2, Category::Direct), (2, 1, Category::Indirect), (3, 1, Category::Conf)],
        );
        let s = strip_annotations(&d);
        assert_eq!(s.words, vec!["in", "town"]);
        assert!(s.annotations.is_empty());
    }

    #[test]
    fn pseudonymize_collapses_direct_span() {
        let d = raw("john smith visited", &[(0, 2, Category::Direct)]);
        let p = pseudonymize(&d);
        assert_eq!(p.words, vec!["X", "visited"]);
        assert!(p.annotations.is_empty());
    }

    #[test]
    fn pseudonymize_reindexes_other_spans() {
        let d = raw(
            "mr john smith from paris has flu",
            &[(1, 2, Category::Direct), (4, 1, Category::Indirect), (6, 1, Category::Conf)],
        );
        let p = pseudonymize(&d);
        assert_eq!(p.words, vec!["mr", "X", "from", "paris", "has", "flu"]);
        assert_eq!(p.annotations[0], Annotation { start: 3, len: 1, cat: Category::Indirect });
        assert_eq!(p.annotations[1], Annotation { start: 5, len: 1, cat: Category::Conf });
        p.validate().unwrap();
    }

    #[test]
    fn pseudonymize_without_direct_is_identity() {
        let d = raw("paris has flu", &[(0, 1, Category::Indirect)]);
        assert_eq!(pseudonymize(&d), d);
    }

    #[test]
    fn overlapping_or_outside_spans_are_rejected() {
        assert!(raw("a b c", &[(0, 2, Category::Direct), (1, 1, Category::Conf)])
            .validate()
            .is_err());
        assert!(raw("a b c", &[(2, 2, Category::Direct)]).validate().is_err());
    }

    #[test]
    fn jsonl_uses_documented_field_names() {
        let d = raw("a b", &[(1, 1, Category::Conf)]);
        let line = to_jsonl(&[d]);
        assert_eq!(
            line,
            "{\"id\":\"d\",\"words\":[\"a\",\"b\"],\"annotations\":[{\"start\":1,\"len\":1,\"cat\":\"CONF\"}]}\n"
        );
        let extra = r#"{"id":"d","words":[],"annotations":[],"x":1}"#;
        assert!(serde_json::from_str::<RawDocument>(extra).is_err());
    }

    #[test]
    fn split_is_disjoint_and_nonempty() {
        let docs: Vec<usize> = (0..20).collect();
        let s = split_corpus(&docs, 0.1, 7).unwrap();
        assert_eq!(s.heldout.len(), 2);
        assert_eq!(s.train.len(), 18);
        assert!(s.train.iter().all(|d| !s.heldout.contains(d)));
        let tiny = split_corpus(&[1, 2], 0.01, 7).unwrap();
        assert_eq!((tiny.train.len(), tiny.heldout.len()), (1, 1));
    }

    #[test]
    fn chunking_respects_spans() {
        let words = "a b c d e f g";
        let d = raw(words, &[(2, 3, Category::Direct)]);
        let vocab = Vocab::build([d.words.as_slice()], 1, true).unwrap();
        let doc = AnnotatedDocument::from_raw(&d, &vocab).unwrap();
        let chunks = doc.chunk(4).unwrap();
        assert_eq!(chunks[0].words, vec!["a", "b"]);
        assert_eq!(chunks[1].words, vec!["c", "d", "e", "f"]);
        assert_eq!(chunks[1].annotations[0].start, 0);
        assert_eq!(chunks[2].words, vec!["g"]);
        assert!(doc.chunk(2).is_err());
    }
}
