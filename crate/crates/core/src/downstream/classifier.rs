use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::task::LabeledExample;
use crate::error::{Result, SaniError};
use crate::model::{encode, ModelParams, ParamVars, Variant, INIT_STD};
use crate::ndtensor::{adam_step, AdamState, GradientSet, Tape, Tensor};
use crate::seeding::{derive_seed, rng_for, stream};

pub const CLS_WEIGHT: &str = "cls.weight";
pub const CLS_BIAS: &str = "cls.bias";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub classes: usize,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            classes: 4,
            epochs: 4,
            warmup_fraction: 0.10,
            peak_lr: 2e-5,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Linear warmup to `peak` over the first `floor(warmup_fraction * total)`
/// steps, then linear decay to zero. `step` counts from 0.
pub fn warmup_lr(step: usize, total: usize, warmup_fraction: f64, peak: f64) -> f64 {
    let w = crate::unlearn::floor_count(warmup_fraction, total);
    if step < w {
        peak * (step + 1) as f64 / w as f64
    } else if step >= total {
        0.0
    } else {
        peak * (total - step) as f64 / (total - w) as f64
    }
}

/// Encoder plus a `[classes × d_model]` head reading the first position.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub params: ModelParams,
    pub classes: usize,
}

impl Classifier {
    /// Copies the encoder and appends a freshly initialized head.
    pub fn new(encoder: &ModelParams, classes: usize, seed: u64) -> Result<Self> {
        encoder.config.variant.expect(Variant::Mlm)?;
        let d = encoder.config.d_model;
        let mut params = encoder.clone();
        params.store = crate::ndtensor::ParamStore::new();
        for (name, t) in encoder.store.iter().take(encoder.base_len()) {
            params.store.push(name, t.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, stream::CLASSIFIER]));
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let w = (0..classes * d).map(|_| normal.sample(&mut rng)).collect();
        params.store.push(CLS_WEIGHT, Tensor::new(vec![classes, d], w)?);
        params.store.push(CLS_BIAS, Tensor::zeros(&[classes]));
        Ok(Self { params, classes })
    }

    fn head(&self) -> (usize, usize) {
        let n = self.params.base_len();
        (n, n + 1)
    }

    fn logits(&self, tape: &mut Tape, ids: &[u32]) -> Result<crate::ndtensor::Var> {
        let vars = ParamVars::register(tape, &self.params);
        let hidden = encode(tape, &self.params, &vars, ids, self.params.config.variant.attention())?;
        let first = tape.select_rows(hidden, &[0])?;
        let (w, b) = self.head();
        tape.linear(first, vars.get(w), Some(vars.get(b)))
    }

    pub fn predict(&self, ids: &[u32]) -> Result<usize> {
        let mut tape = Tape::new();
        let l = self.logits(&mut tape, ids)?;
        Ok(crate::model::argmax_rows(tape.value(l))[0] as usize)
    }

    fn gradients(&self, ex: &LabeledExample) -> Result<GradientSet> {
        let mut tape = Tape::new();
        let l = self.logits(&mut tape, &ex.token_ids)?;
        let loss = tape.cross_entropy(l, &[ex.label as u32], u32::MAX)?;
        tape.backward(loss, &self.params.store)
    }
}

/// Unweighted mean of per-class F1 over classes `0..classes`.
pub fn macro_f1(predicted: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(SaniError::EmptyLabeledSet);
    }
    for c in 0..classes {
        if !labels.contains(&c) {
            return Err(SaniError::MissingClass(c));
        }
    }
    let mut sum = 0.0;
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(sum / classes as f64)
}

pub fn evaluate_f1(model: &Classifier, test: &[LabeledExample]) -> Result<f64> {
    use rayon::prelude::*;
    let predicted: Vec<usize> = test
        .par_iter()
        .map(|ex| model.predict(&ex.token_ids))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = test.iter().map(|e| e.label).collect();
    macro_f1(&predicted, &labels, model.classes)
}

/// Fine-tunes encoder and head jointly. Returns the model and the test
/// macro F1 after every epoch.
pub fn train_classifier(
    encoder: &ModelParams,
    train: &[LabeledExample],
    test: &[LabeledExample],
    cfg: &ClassifierConfig,
) -> Result<(Classifier, Vec<f64>)> {
    use rayon::prelude::*;
    if train.is_empty() || test.is_empty() {
        return Err(SaniError::EmptyLabeledSet);
    }
    if let Some(bad) = train.iter().chain(test).find(|e| e.label >= cfg.classes) {
        return Err(SaniError::Config(format!("label {} with {} classes", bad.label, cfg.classes)));
    }
    let mut model = Classifier::new(encoder, cfg.classes, cfg.seed)?;
    let mut opt = AdamState::new(&model.params.store);
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng_for(&[cfg.seed, stream::CLASSIFIER, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            let parts: Vec<GradientSet> = batch
                .par_iter()
                .map(|&i| model.gradients(&train[i]))
                .collect::<Result<_>>()?;
            let mut grads = GradientSet::zeros_like(&model.params.store);
            for g in &parts {
                grads.accumulate(g, 1.0 / batch.len() as f64);
            }
            let lr = warmup_lr(step, total, cfg.warmup_fraction, cfg.peak_lr);
            adam_step(&mut model.params.store, &grads, &mut opt, lr)?;
            step += 1;
        }
        history.push(evaluate_f1(&model, test)?);
    }
    Ok((model, history))
}
