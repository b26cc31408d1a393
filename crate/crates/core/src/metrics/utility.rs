use rayon::prelude::*;

use super::predict::eval_pass_clm;
use crate::corpus::AnnotatedDocument;
use crate::error::{Result, SaniError};
use crate::model::{argmax_rows, encode, head_logits, ModelParams, ParamVars, Variant};
use crate::ndtensor::Tape;
use crate::objectives::{select_masks_standard, MlmExample, MASK_RATE};
use crate::seeding::{rng_for, stream};

fn ratio(parts: impl Iterator<Item = (usize, usize)>) -> Result<f64> {
    let (hit, total) = parts.fold((0, 0), |(h, t), (a, b)| (h + a, t + b));
    if total == 0 {
        return Err(SaniError::EmptyHeldout);
    }
    Ok(hit as f64 / total as f64)
}

/// Top-1 accuracy on a fixed 15% whole-word masked sample of `heldout`.
pub fn utility_mlm(params: &ModelParams, heldout: &[AnnotatedDocument]) -> Result<f64> {
    params.config.variant.expect(Variant::Mlm)?;
    let parts: Vec<(usize, usize)> = heldout
        .par_iter()
        .enumerate()
        .filter(|(_, d)| !d.is_empty())
        .map(|(i, doc)| {
            let mut rng = rng_for(&[stream::UTILITY_SAMPLE, i as u64]);
            let plan = select_masks_standard(doc, MASK_RATE, &mut rng)?;
            let ex = MlmExample::build(doc, &plan);
            let rows = ex.target_rows();
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, params);
            let hidden = encode(&mut tape, params, &vars, &ex.input, params.config.variant.attention())?;
            let logits = head_logits(&mut tape, params, &vars, hidden, Some(&rows))?;
            let hit = argmax_rows(tape.value(logits))
                .iter()
                .zip(&rows)
                .filter(|(p, &r)| **p == ex.targets[r])
                .count();
            Ok((hit, rows.len()))
        })
        .collect::<Result<_>>()?;
    ratio(parts.into_iter())
}

/// Teacher-forced top-1 next-token accuracy over `heldout`.
pub fn utility_clm(params: &ModelParams, heldout: &[AnnotatedDocument]) -> Result<f64> {
    let preds = eval_pass_clm(params, heldout)?;
    ratio(heldout.iter().zip(&preds).map(|(doc, p)| {
        let hit = (1..doc.num_tokens())
            .filter(|&t| p.predicted[t] == Some(doc.token_ids[t]))
            .count();
        (hit, doc.num_tokens().saturating_sub(1))
    }))
}

pub fn utility(params: &ModelParams, heldout: &[AnnotatedDocument]) -> Result<f64> {
    match params.config.variant {
        Variant::Mlm => utility_mlm(params, heldout),
        Variant::Clm => utility_clm(params, heldout),
    }
}
