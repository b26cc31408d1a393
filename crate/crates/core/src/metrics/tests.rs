use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::corpus::{
    parse_blacklist_text, AnnotatedDocument, Annotation, Blacklist, Category, RawDocument, Vocab,
};
use crate::model::Variant;
use crate::ndtensor::AdamState;
use crate::objectives::{train_epoch, Scheme, TrainSchedule, TrainingSet};
use crate::testutil::{fixture, tiny_model};

fn raw(id: &str, text: &str, spans: &[(usize, usize)]) -> RawDocument {
    RawDocument {
        id: id.into(),
        words: text.split_whitespace().map(String::from).collect(),
        annotations: spans
            .iter()
            .map(|&(start, len)| Annotation {
                start,
                len,
                cat: Category::Direct,
            })
            .collect(),
    }
}

fn corpus(raws: &[RawDocument]) -> (Vocab, Vec<AnnotatedDocument>) {
    let vocab = Vocab::build(raws.iter().map(|r| r.words.as_slice()), 1, true).unwrap();
    let docs = raws.iter().map(|r| AnnotatedDocument::from_raw(r, &vocab).unwrap()).collect();
    (vocab, docs)
}

fn truth(docs: &[AnnotatedDocument]) -> PredictionTable {
    docs.iter()
        .map(|d| DocPredictions {
            predicted: d.token_ids.iter().map(|&t| Some(t)).collect(),
            pass: vec![0; d.num_tokens()],
        })
        .collect()
}

#[test]
fn every_token_is_masked_in_exactly_one_pass() {
    let words: Vec<String> = (0..100).map(|i| format!("w{i}")).collect();
    let (vocab, docs) = corpus(&[raw("d", &words.join(" "), &[(10, 2), (40, 3)])]);
    assert_eq!(num_passes(0.15), 7);
    let mut cfg = crate::testutil::tiny_config(Variant::Mlm, vocab.len());
    cfg.max_seq = 101;
    let p = crate::model::ModelParams::init(&cfg).unwrap();
    let table = eval_pass_mlm(&p, &docs).unwrap();
    assert!(table[0].predicted.iter().all(Option::is_some));
    let mut per_pass = [0usize; 7];
    for &k in &table[0].pass {
        per_pass[k] += 1;
    }
    assert_eq!(per_pass.iter().sum::<usize>(), 100);
    assert!(per_pass.iter().all(|&n| (13..=17).contains(&n)), "{per_pass:?}");
    assert_eq!(table[0].pass[10], table[0].pass[11]);
    assert_eq!(table[0].pass[40], table[0].pass[42]);
    assert_eq!(masking_units(&docs[0]).len(), 97);
}

#[test]
fn sweeps_are_deterministic() {
    let f = fixture();
    let p = tiny_model(Variant::Mlm, f.vocab.len());
    assert_eq!(eval_pass_mlm(&p, &f.docs).unwrap(), eval_pass_mlm(&p, &f.docs).unwrap());
    let c = tiny_model(Variant::Clm, f.vocab.len());
    assert!(eval_pass_mlm(&c, &f.docs).unwrap_err().is_config_error());
}

#[test]
fn no_blacklisted_prediction_means_full_privacy() {
    let (vocab, docs) = corpus(&[raw("a", "john smith has a cold", &[(0, 2)])]);
    let bl = Blacklist::new(parse_blacklist_text("john smith"), &vocab, &docs).unwrap();
    let has = vocab.id("has").unwrap();
    let preds = vec![DocPredictions {
        predicted: vec![Some(has); 5],
        pass: vec![0; 5],
    }];
    let c = count_regurgitations(&preds, &docs, &bl);
    assert_eq!(c.events, 0);
    assert_eq!(c.table.rows[0].capped, 0);
    assert_eq!(privacy_metric(&c.table).unwrap(), 1.0);
}

#[test]
fn perfect_recall_means_zero_privacy() {
    let f = fixture();
    let c = count_regurgitations(&truth(&f.docs), &f.docs, &f.identifiers);
    for r in &c.table.rows {
        assert_eq!(r.capped, r.repetitions, "{}", r.term);
    }
    assert_eq!(privacy_metric(&c.table).unwrap(), 0.0);
    assert_eq!(regurgitation_rate(&c.table).unwrap(), 1.0);
}

#[test]
fn hand_enumerated_corpus() {
    let raws = [
        raw("a", "john smith saw mary jones today", &[(0, 2), (3, 2)]),
        raw("b", "mary jones met john smith", &[(0, 2), (3, 2)]),
        raw("c", "nobody came today", &[]),
    ];
    let (v, docs) = corpus(&raws);
    let bl = Blacklist::new(parse_blacklist_text("john smith\nmary jones"), &v, &docs).unwrap();
    let id = |w: &str| Some(v.id(w).unwrap());
    let preds = vec![
        // "john smith" in place; "mary" right but "jones" wrong: one elsewhere
        // event for mary jones.
        DocPredictions {
            predicted: vec![id("john"), id("smith"), id("saw"), id("mary"), id("today"), id("today")],
            pass: vec![2, 2, 0, 1, 1, 0],
        },
        // Both tokens of "mary jones" right but in different passes: two
        // elsewhere events. "smith" predicted at "met": one elsewhere event
        // for john smith.
        DocPredictions {
            predicted: vec![id("mary"), id("jones"), id("smith"), id("saw"), id("saw")],
            pass: vec![0, 1, 2, 3, 3],
        },
        // "jones" predicted at "nobody": one elsewhere event for mary jones.
        DocPredictions {
            predicted: vec![id("jones"), id("came"), None],
            pass: vec![0, 0, 0],
        },
    ];
    let c = count_regurgitations(&preds, &docs, &bl);
    assert_eq!(c.events, 7);
    let rows: HashMap<_, _> = c.table.rows.iter().map(|r| (r.term.as_str(), r)).collect();
    let js = rows["john smith"];
    assert_eq!((js.repetitions, js.events, js.capped), (2, 3, 2));
    let mj = rows["mary jones"];
    assert_eq!((mj.repetitions, mj.events, mj.capped), (2, 4, 2));
    assert_eq!(privacy_metric(&c.table).unwrap(), 0.0);
}

/// Independent count at token level: term matches are found by scanning
/// token ids rather than words.
fn oracle(preds: &PredictionTable, docs: &[AnnotatedDocument], bl: &Blacklist) -> (usize, Vec<(usize, usize)>) {
    let terms = bl.terms();
    let mut events = 0;
    let mut ev = vec![0; terms.len()];
    let mut iters = vec![0; terms.len()];
    for (doc, p) in docs.iter().zip(preds) {
        let ids = &doc.token_ids;
        let mut own = vec![false; ids.len()];
        for (k, term) in terms.iter().enumerate() {
            let l = term.token_ids.len();
            for s in 0..ids.len().saturating_sub(l - 1) {
                let at_word = doc.word_starts.contains(&s) && doc.word_starts.contains(&(s + l));
                if !at_word || ids[s..s + l] != term.token_ids[..] {
                    continue;
                }
                let ok = (s..s + l).all(|t| p.predicted[t] == Some(ids[t]) && p.pass[t] == p.pass[s]);
                if ok && !own[s..s + l].iter().any(|&o| o) {
                    iters[k] += 1;
                    ev[k] += l;
                    own[s..s + l].iter_mut().for_each(|o| *o = true);
                }
            }
        }
        for t in 0..ids.len() {
            if let Some(x) = p.predicted[t] {
                if let Some(k) = terms.iter().position(|term| term.token_ids.contains(&x)) {
                    events += 1;
                    if !own[t] {
                        ev[k] += 1;
                        iters[k] += 1;
                    }
                }
            }
        }
    }
    let rows = (0..terms.len())
        .map(|k| (ev[k], iters[k].min(bl.repetitions()[k])))
        .collect();
    (events, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn counts_agree_with_token_level_oracle(
        choice in proptest::collection::vec((0u32..1000, 0usize..3, proptest::bool::weighted(0.5)), 500)
    ) {
        let raws = [
            raw("a", "ann lee has flu and ann lee rests", &[(0, 2), (5, 2)]),
            raw("b", "dr bo kim saw ann lee at noon", &[(1, 2), (4, 2)]),
            raw("c", "bo kim has flu again today", &[(0, 2)]),
        ];
        let (v, docs) = corpus(&raws);
        let bl = Blacklist::new(parse_blacklist_text("ann lee\nbo kim\nflu"), &v, &docs).unwrap();
        let mut it = choice.into_iter();
        let preds: PredictionTable = docs
            .iter()
            .map(|d| {
                let mut predicted = Vec::new();
                let mut pass = Vec::new();
                for &t in &d.token_ids {
                    let (r, k, copy) = it.next().unwrap();
                    predicted.push(Some(if copy { t } else { r % v.len() as u32 }));
                    pass.push(k);
                }
                DocPredictions { predicted, pass }
            })
            .collect();
        let c = count_regurgitations(&preds, &docs, &bl);
        let (events, rows) = oracle(&preds, &docs, &bl);
        prop_assert_eq!(c.events, events);
        for (r, (e, cap)) in c.table.rows.iter().zip(rows) {
            prop_assert_eq!(r.events, e);
            prop_assert_eq!(r.capped, cap);
            prop_assert!(r.capped <= r.repetitions);
        }
    }
}

#[test]
fn no_occurrence_is_a_zero_denominator() {
    let t = TermTable {
        rows: vec![TermRow {
            term: "x".into(),
            repetitions: 0,
            events: 0,
            capped: 0,
            excluded: false,
        }],
    };
    assert!(matches!(privacy_metric(&t), Err(crate::SaniError::ZeroDenominator)));
}

#[test]
fn spearman_examples() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
    assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 5.0, 6.0, 9.0]) - 1.0).abs() < 1e-12);
    assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
}

#[test]
fn cumulative_curve_is_monotone() {
    let f = fixture();
    let c = count_regurgitations(&truth(&f.docs), &f.docs, &f.identifiers);
    let a = frequency_analysis(&c.table);
    assert!(a.cumulative.windows(2).all(|w| w[0].cumulative_events <= w[1].cumulative_events));
    assert!(a.cumulative.windows(2).all(|w| w[0].repetitions <= w[1].repetitions));
    assert_eq!(a.cumulative.last().unwrap().cumulative_events, a.scatter.iter().map(|s| s.events).sum::<usize>());
    // Events are repetitions times term length here.
    assert!(a.spearman > 0.5, "{}", a.spearman);
    let top = decile(&c.table, true);
    assert_eq!(top.len(), c.table.rows.len().div_ceil(10));
    let max = c.table.rows.iter().map(|r| r.repetitions).max().unwrap();
    assert_eq!(c.table.rows[top[0]].repetitions, max);
}

#[test]
fn degenerate_corpus_is_learned_perfectly() {
    let text = "a b a b a b a b a b a b";
    let raws: Vec<_> = (0..8).map(|i| raw(&format!("d{i}"), text, &[])).collect();
    let (v, docs) = corpus(&raws);
    for (variant, scheme) in [(Variant::Mlm, Scheme::Mlm), (Variant::Clm, Scheme::Clm)] {
        let mut p = tiny_model(variant, v.len());
        let mut opt = AdamState::new(&p.store);
        let set = TrainingSet::new(&docs, None, variant, 64).unwrap();
        let s = TrainSchedule {
            total_epochs: 30,
            lr_start: 1e-2,
            batch_size: 4,
            mask_rate: 0.15,
        };
        for e in 0..s.total_epochs {
            train_epoch(&mut p, &mut opt, &set, scheme, &s, e, 1).unwrap();
        }
        assert_eq!(utility(&p, &docs).unwrap(), 1.0, "{variant}");
    }
}

#[test]
fn empty_heldout_is_an_error() {
    let p = tiny_model(Variant::Clm, 10);
    assert!(matches!(utility(&p, &[]), Err(crate::SaniError::EmptyHeldout)));
}

#[test]
fn metrics_csv_round_trip() {
    let rec = vec![MetricsRecord {
        run: "mlm".into(),
        epoch: 3,
        phase: Phase::Repair,
        privacy: 0.75,
        regurgitation: 0.125,
        utility: 0.5,
        events: 12,
    }];
    let text = metrics_to_csv(&rec).unwrap();
    assert_eq!(text, "run,epoch,phase,privacy,regurgitation,utility,events\nmlm,3,repair,0.75,0.125,0.5,12\n");
    assert_eq!(metrics_from_csv(&text).unwrap(), rec);
    let empty = metrics_to_csv(&[]).unwrap();
    assert_eq!(empty.trim(), METRICS_HEADER);
}

#[test]
fn term_table_csv_header() {
    let f = fixture();
    let c = count_regurgitations(&truth(&f.docs), &f.docs, &f.identifiers);
    let text = c.table.to_csv().unwrap();
    assert!(text.starts_with("term,repetitions,events,capped\n"));
    assert_eq!(TermTable::from_csv(&text).unwrap().rows.len(), c.table.rows.len());
}

#[test]
fn measurement_privacy_complements_the_rate() {
    let f = fixture();
    let p = tiny_model(Variant::Mlm, f.vocab.len());
    let ev = Evaluator {
        train: &f.docs,
        heldout: &f.docs[..5],
        identifiers: &f.identifiers,
        conf: &f.conf,
    };
    let m = ev.measure(&p, "r", 0, Phase::Finetune).unwrap();
    let rate = regurgitation_rate(&m.identifier_table).unwrap();
    assert_eq!(m.record.privacy + rate, 1.0);
    assert!((0.0..=1.0).contains(&m.record.utility));
}
