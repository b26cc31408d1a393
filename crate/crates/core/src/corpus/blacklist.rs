use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::document::AnnotatedDocument;
use super::vocab::{Vocab, UNK_ID};
use crate::error::{Result, SaniError};

/// One sensitive n-gram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub words: Vec<String>,
    /// Token ids of all words, concatenated.
    pub token_ids: Vec<u32>,
    /// Some word is out of vocabulary, so the term can never be predicted
    /// as itself.
    pub has_unk: bool,
}

impl Term {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

/// A match of term `term` starting at word `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub term: usize,
    pub start: usize,
    pub len: usize,
}

/// Sensitive terms resolved into token space, with their corpus counts.
#[derive(Debug, Clone)]
pub struct Blacklist {
    terms: Vec<Term>,
    token_set: HashSet<u32>,
    repetitions: Vec<usize>,
    by_first_word: HashMap<String, Vec<usize>>,
}

/// Parses blacklist text: one space-separated n-gram per line, blank lines
/// and lines starting with `#` skipped, duplicates collapsed (first wins).
pub fn parse_blacklist_text(text: &str) -> Vec<Vec<String>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let words: Vec<String> = line.split_whitespace().map(String::from).collect();
        if seen.insert(words.clone()) {
            out.push(words);
        }
    }
    out
}

pub fn load_blacklist(path: &Path, vocab: &Vocab, corpus: &[AnnotatedDocument]) -> Result<Blacklist> {
    let text = std::fs::read_to_string(path).map_err(|e| SaniError::io(path, e))?;
    Blacklist::new(parse_blacklist_text(&text), vocab, corpus)
}

impl Blacklist {
    /// Resolves terms against `vocab` and counts their occurrences in
    /// `corpus` by exact word n-gram matching.
    pub fn new(terms: Vec<Vec<String>>, vocab: &Vocab, corpus: &[AnnotatedDocument]) -> Result<Self> {
        let mut seen = HashSet::new();
        let terms: Vec<Vec<String>> = terms
            .into_iter()
            .filter(|t| !t.is_empty() && seen.insert(t.clone()))
            .collect();
        if terms.is_empty() {
            return Err(SaniError::EmptyBlacklist);
        }
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|words| {
                let token_ids: Vec<u32> = words.iter().flat_map(|w| vocab.encode_word(w)).collect();
                let has_unk = token_ids.contains(&UNK_ID);
                Term {
                    words,
                    token_ids,
                    has_unk,
                }
            })
            .collect();
        // UNK stands for every unknown word, so it never marks a sensitive
        // token by itself.
        let token_set = terms
            .iter()
            .flat_map(|t| t.token_ids.iter().copied())
            .filter(|&id| id != UNK_ID)
            .collect();
        let mut by_first_word: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in terms.iter().enumerate() {
            by_first_word.entry(t.words[0].clone()).or_default().push(i);
        }
        let mut bl = Self {
            repetitions: vec![0; terms.len()],
            terms,
            token_set,
            by_first_word,
        };
        bl.recount(corpus);
        Ok(bl)
    }

    /// Union of several blacklists; repetitions are recounted on `corpus`.
    pub fn union(parts: &[&Blacklist], vocab: &Vocab, corpus: &[AnnotatedDocument]) -> Result<Self> {
        let terms = parts
            .iter()
            .flat_map(|b| b.terms.iter().map(|t| t.words.clone()))
            .collect();
        Self::new(terms, vocab, corpus)
    }

    /// Recomputes repetition counts over another corpus.
    pub fn recount(&mut self, corpus: &[AnnotatedDocument]) {
        let mut reps = vec![0; self.terms.len()];
        for doc in corpus {
            for occ in self.occurrences(doc) {
                reps[occ.term] += 1;
            }
        }
        self.repetitions = reps;
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn repetitions(&self) -> &[usize] {
        &self.repetitions
    }

    pub fn token_set(&self) -> &HashSet<u32> {
        &self.token_set
    }

    pub fn contains_token(&self, id: u32) -> bool {
        self.token_set.contains(&id)
    }

    /// Lowest-index term containing token `id`.
    pub fn owner_of(&self, id: u32) -> Option<usize> {
        if !self.contains_token(id) {
            return None;
        }
        self.terms.iter().position(|t| t.token_ids.contains(&id))
    }

    /// Every (possibly overlapping) term match in `doc`, ordered by start
    /// word then term index.
    pub fn occurrences(&self, doc: &AnnotatedDocument) -> Vec<Occurrence> {
        let mut out = Vec::new();
        for (w, word) in doc.words.iter().enumerate() {
            let Some(cands) = self.by_first_word.get(word) else { continue };
            for &t in cands {
                let tw = &self.terms[t].words;
                if w + tw.len() <= doc.words.len() && doc.words[w..w + tw.len()] == tw[..] {
                    out.push(Occurrence {
                        term: t,
                        start: w,
                        len: tw.len(),
                    });
                }
            }
        }
        out
    }

    /// Per-word flag: the word lies inside some term occurrence.
    pub fn word_mask(&self, doc: &AnnotatedDocument) -> Vec<bool> {
        let mut mask = vec![false; doc.num_words()];
        for occ in self.occurrences(doc) {
            mask[occ.start..occ.start + occ.len].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// Per-token flag derived from [`Blacklist::word_mask`].
    pub fn token_mask(&self, doc: &AnnotatedDocument) -> Vec<bool> {
        let words = self.word_mask(doc);
        let mut mask = vec![false; doc.num_tokens()];
        for (w, &m) in words.iter().enumerate() {
            if m {
                for t in doc.token_range(w, 1) {
                    mask[t] = true;
                }
            }
        }
        mask
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(&t.text());
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::document::RawDocument;

    fn corpus(texts: &[&str]) -> (Vocab, Vec<AnnotatedDocument>) {
        let raws: Vec<RawDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| RawDocument {
                id: i.to_string(),
                words: t.split_whitespace().map(String::from).collect(),
                annotations: vec![],
            })
            .collect();
        let vocab = Vocab::build(raws.iter().map(|r| r.words.as_slice()), 1, true).unwrap();
        let docs = raws
            .iter()
            .map(|r| AnnotatedDocument::from_raw(r, &vocab).unwrap())
            .collect();
        (vocab, docs)
    }

    #[test]
    fn counts_unigram_and_bigram_terms() {
        let (vocab, docs) = corpus(&["john met john at acme corp", "john left acme"]);
        let bl = Blacklist::new(parse_blacklist_text("john\nacme corp\n"), &vocab, &docs).unwrap();
        assert_eq!(bl.len(), 2);
        assert_eq!(bl.repetitions(), &[3, 1]);
    }

    #[test]
    fn duplicates_and_comments_collapse() {
        let terms = parse_blacklist_text("# header\njohn\n\njohn\n  acme   corp \n");
        assert_eq!(terms, vec![vec!["john".to_string()], vec!["acme".into(), "corp".into()]]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let (vocab, docs) = corpus(&["a"]);
        assert!(matches!(
            Blacklist::new(parse_blacklist_text("# nothing\n\n"), &vocab, &docs),
            Err(SaniError::EmptyBlacklist)
        ));
    }

    #[test]
    fn unknown_words_are_flagged_not_dropped() {
        let (vocab, docs) = corpus(&["alice met bob"]);
        let bl = Blacklist::new(parse_blacklist_text("zed\nbob"), &vocab, &docs).unwrap();
        assert!(bl.terms()[0].has_unk);
        assert!(!bl.terms()[1].has_unk);
        assert_eq!(bl.repetitions(), &[0, 1]);
        assert!(!bl.contains_token(UNK_ID));
    }

    #[test]
    fn word_mask_marks_every_word_of_a_match() {
        let (vocab, docs) = corpus(&["we saw acme corp today"]);
        let bl = Blacklist::new(parse_blacklist_text("acme corp"), &vocab, &docs).unwrap();
        assert_eq!(bl.word_mask(&docs[0]), vec![false, false, true, true, false]);
    }

    proptest! {
        #[test]
        fn token_set_agrees_with_linear_scan(ids in prop::collection::vec(0u32..40, 1000)) {
            let (vocab, docs) = corpus(&["a b c d e f g h i j k l m n o p q r s t"]);
            let bl = Blacklist::new(parse_blacklist_text("a b\nc\nq r s\nzz\n"), &vocab, &docs).unwrap();
            for id in ids {
                let scan = bl
                    .terms()
                    .iter()
                    .any(|t| t.token_ids.iter().any(|&x| x == id && x != UNK_ID));
                prop_assert_eq!(bl.contains_token(id), scan);
            }
        }
    }
}
