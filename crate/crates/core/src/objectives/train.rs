use rayon::prelude::*;

use super::clm::clm_example;
use super::masking::{select_masks_excluding, MaskingPlan, MlmExample};
use super::schedule::{Scheme, TrainSchedule};
use crate::corpus::{AnnotatedDocument, Blacklist, PAD_ID};
use crate::error::{Result, SaniError};
use crate::model::{encode, head_logits, ModelParams, ParamVars, Variant};
use crate::ndtensor::{adam_step, AdamState, GradientSet, Tape, Var};
use crate::seeding::{rng_for, stream};

/// Token budget of one document so that its model input fits `max_seq`.
pub fn doc_token_budget(variant: Variant, max_seq: usize) -> usize {
    match variant {
        // BOS takes one slot.
        Variant::Mlm => max_seq - 1,
        // The last token is only ever a target.
        Variant::Clm => max_seq + 1,
    }
}

/// Chunks documents so every model input fits the context window.
pub fn prepare_documents(
    docs: &[AnnotatedDocument],
    variant: Variant,
    max_seq: usize,
) -> Result<Vec<AnnotatedDocument>> {
    let budget = doc_token_budget(variant, max_seq);
    let mut out = Vec::with_capacity(docs.len());
    for d in docs.iter().filter(|d| !d.is_empty()) {
        out.extend(d.chunk(budget)?);
    }
    Ok(out)
}

/// One training sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<u32>,
    /// Loss targets, PAD where ignored; aligned with `rows`.
    pub targets: Vec<u32>,
    /// Input positions whose logits enter the loss.
    pub rows: Vec<usize>,
}

/// Training documents with their blacklist exclusion masks.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    docs: Vec<AnnotatedDocument>,
    word_excluded: Vec<Vec<bool>>,
    token_excluded: Vec<Vec<bool>>,
}

impl TrainingSet {
    /// `blacklist` drives the privacy-preserving schemes; None acts as an
    /// empty blacklist.
    pub fn new(
        docs: &[AnnotatedDocument],
        blacklist: Option<&Blacklist>,
        variant: Variant,
        max_seq: usize,
    ) -> Result<Self> {
        let docs = prepare_documents(docs, variant, max_seq)?;
        if docs.is_empty() {
            return Err(SaniError::EmptyCorpus);
        }
        let (word_excluded, token_excluded) = match blacklist {
            Some(bl) => (
                docs.iter().map(|d| bl.word_mask(d)).collect(),
                docs.iter().map(|d| bl.token_mask(d)).collect(),
            ),
            None => (
                docs.iter().map(|d| vec![false; d.num_words()]).collect(),
                docs.iter().map(|d| vec![false; d.num_tokens()]).collect(),
            ),
        };
        Ok(Self {
            docs,
            word_excluded,
            token_excluded,
        })
    }

    pub fn docs(&self) -> &[AnnotatedDocument] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.docs.len().div_ceil(batch_size)
    }

    /// Masking plan of document `i` at `epoch`; None when a PPMLM document has
    /// no maskable word.
    pub fn masking_plan(
        &self,
        i: usize,
        scheme: Scheme,
        rate: f64,
        epoch: usize,
        seed: u64,
    ) -> Result<Option<MaskingPlan>> {
        let none = vec![false; self.docs[i].num_words()];
        let excluded = match scheme {
            Scheme::Ppmlm => &self.word_excluded[i],
            _ => &none,
        };
        let mut rng = rng_for(&[seed, stream::MASKING, epoch as u64, i as u64]);
        match select_masks_excluding(&self.docs[i], excluded, rate, &mut rng) {
            Ok(p) => Ok(Some(p)),
            Err(SaniError::NoMaskableTokens) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Training sequence of document `i` at `epoch`, or None when it carries
    /// no target.
    pub fn example(
        &self,
        i: usize,
        scheme: Scheme,
        rate: f64,
        epoch: usize,
        seed: u64,
    ) -> Result<Option<Example>> {
        let doc = &self.docs[i];
        Ok(match scheme {
            Scheme::Mlm | Scheme::Ppmlm => self
                .masking_plan(i, scheme, rate, epoch, seed)?
                .map(|plan| {
                    let ex = MlmExample::build(doc, &plan);
                    let rows = ex.target_rows();
                    let targets = rows.iter().map(|&r| ex.targets[r]).collect();
                    Example {
                        input: ex.input,
                        targets,
                        rows,
                    }
                }),
            Scheme::Clm | Scheme::Ppclm => {
                let mask = (scheme == Scheme::Ppclm).then(|| self.token_excluded[i].as_slice());
                clm_example(doc, mask).and_then(|(input, targets)| {
                    targets.iter().any(|&t| t != PAD_ID).then(|| Example {
                        rows: (0..input.len()).collect(),
                        input,
                        targets,
                    })
                })
            }
        })
    }
}

fn example_loss(tape: &mut Tape, params: &ModelParams, ex: &Example) -> Result<(Var, usize)> {
    let vars = ParamVars::register(tape, params);
    let mode = params.config.variant.attention();
    let hidden = encode(tape, params, &vars, &ex.input, mode)?;
    let rows = (ex.rows.len() != ex.input.len()).then_some(&ex.rows[..]);
    let logits = head_logits(tape, params, &vars, hidden, rows)?;
    let loss = tape.cross_entropy(logits, &ex.targets, PAD_ID)?;
    Ok((loss, ex.targets.iter().filter(|&&t| t != PAD_ID).count()))
}

/// Mean cross-entropy of one example, its target count and its gradients.
pub fn example_gradients(params: &ModelParams, ex: &Example) -> Result<(f64, usize, GradientSet)> {
    let mut tape = Tape::new();
    let (loss, n) = example_loss(&mut tape, params, ex)?;
    let value = tape.value(loss).data()[0];
    Ok((value, n, tape.backward(loss, &params.store)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean per-target loss over the epoch, evaluated before each step.
    pub loss: f64,
    pub steps: usize,
    pub targets: usize,
}

fn batch_gradients(
    params: &ModelParams,
    examples: &[Example],
) -> Result<Option<(f64, usize, GradientSet)>> {
    let parts: Vec<(f64, usize, GradientSet)> = examples
        .par_iter()
        .map(|ex| example_gradients(params, ex))
        .collect::<Result<_>>()?;
    let total: usize = parts.iter().map(|p| p.1).sum();
    if total == 0 {
        return Ok(None);
    }
    let mut grads = GradientSet::zeros_like(&params.store);
    let mut loss_sum = 0.0;
    for (loss, n, g) in &parts {
        grads.accumulate(g, *n as f64 / total as f64);
        loss_sum += loss * *n as f64;
    }
    Ok(Some((loss_sum, total, grads)))
}

/// One pass over the training set in fixed document order. Masks are drawn
/// afresh from `(seed, epoch_index, document)`; the learning rate follows
/// `schedule` with `epoch_index` counted from the schedule's start.
pub fn train_epoch(
    params: &mut ModelParams,
    opt: &mut AdamState,
    set: &TrainingSet,
    scheme: Scheme,
    schedule: &TrainSchedule,
    epoch_index: usize,
    seed: u64,
) -> Result<EpochStats> {
    scheme.check(params.config.variant)?;
    schedule.validate()?;
    let steps = set.steps_per_epoch(schedule.batch_size);
    let total_steps = (schedule.total_epochs * steps) as f64;
    let mut loss_sum = 0.0;
    let mut targets = 0;
    for s in 0..steps {
        let lo = s * schedule.batch_size;
        let hi = (lo + schedule.batch_size).min(set.len());
        let mut batch = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            if let Some(ex) = set.example(i, scheme, schedule.mask_rate, epoch_index, seed)? {
                batch.push(ex);
            }
        }
        let Some((l, n, grads)) = batch_gradients(params, &batch)? else {
            continue;
        };
        loss_sum += l;
        targets += n;
        let progress = (epoch_index * steps + s) as f64 / total_steps;
        adam_step(&mut params.store, &grads, opt, schedule.lr(progress))?;
    }
    Ok(EpochStats {
        loss: if targets > 0 { loss_sum / targets as f64 } else { 0.0 },
        steps,
        targets,
    })
}

/// Mean per-target loss of the examples `train_epoch` would draw, without
/// updating anything.
pub fn evaluate_objective(
    params: &ModelParams,
    set: &TrainingSet,
    scheme: Scheme,
    rate: f64,
    epoch_index: usize,
    seed: u64,
) -> Result<f64> {
    scheme.check(params.config.variant)?;
    let examples: Vec<Example> = (0..set.len())
        .map(|i| set.example(i, scheme, rate, epoch_index, seed))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let parts: Vec<(f64, usize)> = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let (loss, n) = example_loss(&mut tape, params, ex)?;
            Ok((tape.value(loss).data()[0], n))
        })
        .collect::<Result<_>>()?;
    let n: usize = parts.iter().map(|p| p.1).sum();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(parts.iter().map(|(l, c)| l * *c as f64).sum::<f64>() / n as f64)
}
