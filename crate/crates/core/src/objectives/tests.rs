use super::*;
use crate::corpus::{Category, PAD_ID};
use crate::model::{encode, head_logits, ParamVars, Variant};
use crate::ndtensor::{AdamState, Tape, Tensor};
use crate::testutil::{fixture, tiny_model};
use crate::SaniError;

fn schedule(epochs: usize) -> TrainSchedule {
    TrainSchedule {
        total_epochs: epochs,
        lr_start: 3e-3,
        batch_size: 8,
        mask_rate: MASK_RATE,
    }
}

#[test]
fn privacy_plans_never_touch_identifier_spans() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, Some(&f.identifiers), Variant::Mlm, 64).unwrap();
    let mut plans = 0;
    let mut epoch = 0;
    while plans < 10_000 {
        for (i, doc) in set.docs().iter().enumerate() {
            let Some(plan) = set.masking_plan(i, Scheme::Ppmlm, MASK_RATE, epoch, 9).unwrap() else {
                continue;
            };
            plans += 1;
            for a in doc.annotations.iter().filter(|a| a.cat != Category::Conf) {
                assert!(
                    plan.positions.iter().all(|&w| w < a.start || w >= a.end()),
                    "{} epoch {epoch}: {:?} hits {a:?}",
                    doc.id,
                    plan.positions
                );
            }
        }
        epoch += 1;
    }
}

#[test]
fn privacy_targets_pad_exactly_the_identifier_tokens() {
    let f = fixture();
    let mut pads = 0;
    let mut oracle = 0;
    for doc in &f.docs {
        pads += clm_targets_privacy(doc, &f.identifiers)
            .iter()
            .filter(|&&t| t == PAD_ID)
            .count();
        for a in doc.annotations.iter().filter(|a| a.cat != Category::Conf) {
            oracle += doc.token_range(a.start, a.len).filter(|&t| t > 0).count();
        }
    }
    assert!(oracle > 0);
    assert_eq!(pads, oracle);
}

#[test]
fn plans_are_deterministic_per_epoch() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, None, Variant::Mlm, 64).unwrap();
    let a = set.masking_plan(3, Scheme::Mlm, MASK_RATE, 2, 5).unwrap();
    let b = set.masking_plan(3, Scheme::Mlm, MASK_RATE, 2, 5).unwrap();
    assert_eq!(a, b);
    let differs = (0..10).any(|e| set.masking_plan(3, Scheme::Mlm, MASK_RATE, e, 5).unwrap() != a);
    assert!(differs);
}

#[test]
fn privacy_epoch_without_blacklist_matches_standard_epoch() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, None, Variant::Mlm, 64).unwrap();
    let mut a = tiny_model(Variant::Mlm, f.vocab.len());
    let mut b = a.clone();
    let mut oa = AdamState::new(&a.store);
    let mut ob = AdamState::new(&b.store);
    let s = schedule(2);
    train_epoch(&mut a, &mut oa, &set, Scheme::Mlm, &s, 0, 4).unwrap();
    train_epoch(&mut b, &mut ob, &set, Scheme::Ppmlm, &s, 0, 4).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_epoch_lowers_the_loss() {
    let f = fixture();
    for (variant, scheme) in [(Variant::Mlm, Scheme::Mlm), (Variant::Clm, Scheme::Clm)] {
        let set = TrainingSet::new(&f.docs, None, variant, 64).unwrap();
        let mut p = tiny_model(variant, f.vocab.len());
        let mut opt = AdamState::new(&p.store);
        let before = evaluate_objective(&p, &set, scheme, MASK_RATE, 0, 1).unwrap();
        train_epoch(&mut p, &mut opt, &set, scheme, &schedule(4), 0, 1).unwrap();
        let after = evaluate_objective(&p, &set, scheme, MASK_RATE, 0, 1).unwrap();
        assert!(after < before, "{scheme}: {before} -> {after}");
    }
}

#[test]
fn pad_target_logits_do_not_affect_the_update() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, Some(&f.identifiers), Variant::Clm, 64).unwrap();
    let p = tiny_model(Variant::Clm, f.vocab.len());
    let (i, ex) = (0..set.len())
        .find_map(|i| {
            let ex = set.example(i, Scheme::Ppclm, MASK_RATE, 0, 1).unwrap()?;
            ex.targets.contains(&PAD_ID).then_some((i, ex))
        })
        .expect("a document with an identifier target");
    let (_, _, reference) = example_gradients(&p, &ex).unwrap();

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, &p);
    let hidden = encode(&mut tape, &p, &vars, &ex.input, p.config.variant.attention()).unwrap();
    let logits = head_logits(&mut tape, &p, &vars, hidden, None).unwrap();
    let v = p.config.vocab_size;
    let mut keep = Tensor::zeros(&[ex.input.len(), v]);
    for (r, &t) in ex.targets.iter().enumerate() {
        if t != PAD_ID {
            keep.row_mut(r).fill(1.0);
        }
    }
    let keep = tape.input(keep);
    let zeroed = tape.mul(logits, keep).unwrap();
    let loss = tape.cross_entropy(zeroed, &ex.targets, PAD_ID).unwrap();
    let grads = tape.backward(loss, &p.store).unwrap();
    assert_eq!(grads.tensors(), reference.tensors(), "document {i}");
}

#[test]
fn scheme_must_match_variant() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, None, Variant::Clm, 64).unwrap();
    let mut p = tiny_model(Variant::Clm, f.vocab.len());
    let mut opt = AdamState::new(&p.store);
    assert!(matches!(
        train_epoch(&mut p, &mut opt, &set, Scheme::Ppmlm, &schedule(1), 0, 1),
        Err(SaniError::SchemeVariantMismatch { .. })
    ));
}

#[test]
fn documents_are_chunked_to_the_context() {
    let f = fixture();
    let set = TrainingSet::new(&f.docs, None, Variant::Mlm, 16).unwrap();
    assert!(set.len() > f.docs.len());
    assert!(set.docs().iter().all(|d| d.num_tokens() <= 15));
    let total: usize = set.docs().iter().map(|d| d.num_tokens()).sum();
    assert_eq!(total, f.docs.iter().map(|d| d.num_tokens()).sum::<usize>());
}
