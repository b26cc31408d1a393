use std::collections::HashMap;

use crate::error::{Result, SaniError};

pub const MASK_ID: u32 = 0;
pub const PAD_ID: u32 = 1;
pub const UNK_ID: u32 = 2;
pub const BOS_ID: u32 = 3;
pub const NUM_SPECIAL: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["[MASK]", "[PAD]", "[UNK]", "[BOS]"];

/// Word-level vocabulary with reserved special ids `0..4`.
///
/// With `split_hyphens`, a hyphenated word becomes several tokens: the first
/// piece as-is and every following piece prefixed by `-` (`x-ray` encodes as
/// `x`, `-ray`), so concatenating a word's tokens restores it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    split_hyphens: bool,
}

/// Splits a word into its token strings.
pub fn word_pieces(word: &str, split_hyphens: bool) -> Vec<String> {
    if !split_hyphens || !word.contains('-') {
        return vec![word.to_string()];
    }
    let mut pieces = Vec::new();
    for (i, part) in word.split('-').enumerate() {
        if i == 0 {
            if !part.is_empty() {
                pieces.push(part.to_string());
            }
        } else {
            pieces.push(format!("-{part}"));
        }
    }
    pieces
}

impl Vocab {
    /// Builds a vocabulary from word sequences; pieces seen at least
    /// `min_freq` times get ids ordered by descending frequency, then
    /// lexicographically.
    pub fn build<'a, I>(docs: I, min_freq: usize, split_hyphens: bool) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let min_freq = min_freq.max(1);
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for words in docs {
            for w in words {
                total += 1;
                for piece in word_pieces(w, split_hyphens) {
                    if SPECIAL_TOKENS.contains(&piece.as_str()) {
                        continue;
                    }
                    *counts.entry(piece).or_default() += 1;
                }
            }
        }
        if total == 0 {
            return Err(SaniError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(kept.into_iter().map(|(w, _)| w));
        Ok(Self::from_tokens(id_to_token, split_hyphens))
    }

    fn from_tokens(id_to_token: Vec<String>, split_hyphens: bool) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            token_to_id,
            id_to_token,
            split_hyphens,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn split_hyphens(&self) -> bool {
        self.split_hyphens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIAL
    }

    /// Token ids for one word; unknown pieces map to UNK.
    pub fn encode_word(&self, word: &str) -> Vec<u32> {
        word_pieces(word, self.split_hyphens)
            .iter()
            .map(|p| match self.token_to_id.get(p) {
                Some(&id) if !Self::is_special(id) => id,
                _ => UNK_ID,
            })
            .collect()
    }

    /// Concatenates the tokens of one word.
    pub fn decode_word(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(SPECIAL_TOKENS[UNK_ID as usize]))
            .collect()
    }

    /// Plain-text listing, one token per line in id order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }
}
