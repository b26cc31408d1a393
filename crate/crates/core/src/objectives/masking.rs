use rand::Rng;

use crate::corpus::{AnnotatedDocument, Blacklist, BOS_ID, MASK_ID, PAD_ID};
use crate::error::{Result, SaniError};

/// Share of words masked per document.
pub const MASK_RATE: f64 = 0.15;

/// Words chosen for masking in one document, at word granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskingPlan {
    pub doc_id: String,
    /// Sorted word indices.
    pub positions: Vec<usize>,
    /// Original token ids of each masked word (all of them are replaced by
    /// MASK).
    pub targets: Vec<Vec<u32>>,
}

/// Number of words masked among `maskable` candidates.
pub fn masked_count(maskable: usize, rate: f64) -> usize {
    if maskable == 0 {
        return 0;
    }
    ((rate * maskable as f64).round() as usize).clamp(1, maskable)
}

fn sample<R: Rng + ?Sized>(candidates: &[usize], rate: f64, rng: &mut R) -> Vec<usize> {
    let k = masked_count(candidates.len(), rate);
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

fn plan(doc: &AnnotatedDocument, positions: Vec<usize>) -> MaskingPlan {
    let targets = positions.iter().map(|&w| doc.word_tokens(w).to_vec()).collect();
    MaskingPlan {
        doc_id: doc.id.clone(),
        positions,
        targets,
    }
}

/// Uniform draw over all words.
pub fn select_masks_standard<R: Rng + ?Sized>(
    doc: &AnnotatedDocument,
    rate: f64,
    rng: &mut R,
) -> Result<MaskingPlan> {
    select_masks_excluding(doc, &vec![false; doc.num_words()], rate, rng).map_err(|e| match e {
        SaniError::NoMaskableTokens => SaniError::EmptyDocument,
        other => other,
    })
}

/// Uniform draw over words not flagged in `excluded`.
pub fn select_masks_excluding<R: Rng + ?Sized>(
    doc: &AnnotatedDocument,
    excluded: &[bool],
    rate: f64,
    rng: &mut R,
) -> Result<MaskingPlan> {
    if doc.is_empty() {
        return Err(SaniError::EmptyDocument);
    }
    debug_assert_eq!(excluded.len(), doc.num_words());
    let candidates: Vec<usize> = (0..doc.num_words()).filter(|&w| !excluded[w]).collect();
    if candidates.is_empty() {
        return Err(SaniError::NoMaskableTokens);
    }
    Ok(plan(doc, sample(&candidates, rate, rng)))
}

/// Draw that never selects a word inside a blacklist match; blacklisted
/// words stay visible as context.
pub fn select_masks_privacy<R: Rng + ?Sized>(
    doc: &AnnotatedDocument,
    blacklist: &Blacklist,
    rate: f64,
    rng: &mut R,
) -> Result<MaskingPlan> {
    select_masks_excluding(doc, &blacklist.word_mask(doc), rate, rng)
}

/// Model input and loss targets for one masked sequence. Position 0 is BOS;
/// targets are PAD (ignored) everywhere except masked tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmExample {
    pub input: Vec<u32>,
    pub targets: Vec<u32>,
}

impl MlmExample {
    pub fn build(doc: &AnnotatedDocument, plan: &MaskingPlan) -> Self {
        let mut input = Vec::with_capacity(doc.num_tokens() + 1);
        input.push(BOS_ID);
        input.extend_from_slice(&doc.token_ids);
        let mut targets = vec![PAD_ID; input.len()];
        for &w in &plan.positions {
            for t in doc.token_range(w, 1) {
                targets[t + 1] = input[t + 1];
                input[t + 1] = MASK_ID;
            }
        }
        Self { input, targets }
    }

    /// Positions carrying a loss target.
    pub fn target_rows(&self) -> Vec<usize> {
        (0..self.targets.len())
            .filter(|&i| self.targets[i] != PAD_ID)
            .collect()
    }
}
