use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sani_core::metrics::predict_corpus;
use sani_core::model::{forward, Variant};
use sani_core::ndtensor::AdamState;
use sani_core::objectives::{example_gradients, train_epoch, Scheme, TrainSchedule, TrainingSet};
use sani_core::unlearn::{erase_last_layer, erase_pruning};
use sani_bench::setup;

fn model(c: &mut Criterion) {
    let s = setup(Variant::Mlm, 40);
    let ids: Vec<u32> = s.docs[0].token_ids.iter().copied().take(63).collect();
    c.bench_function("forward/mlm_63_tokens", |b| {
        b.iter(|| forward(&s.params, black_box(&ids), Variant::Mlm.attention()).unwrap())
    });
    let set = TrainingSet::new(&s.docs, None, Variant::Mlm, s.params.config.max_seq).unwrap();
    let ex = set.example(0, Scheme::Mlm, 0.15, 0, 1).unwrap().unwrap();
    c.bench_function("backward/mlm_example", |b| {
        b.iter(|| example_gradients(&s.params, black_box(&ex)).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("epoch");
    g.sample_size(10);
    for variant in [Variant::Mlm, Variant::Clm] {
        let s = setup(variant, 40);
        let set = TrainingSet::new(&s.docs, None, variant, s.params.config.max_seq).unwrap();
        let scheme = Scheme::standard_for(variant);
        let schedule = TrainSchedule {
            total_epochs: 1,
            lr_start: 1e-3,
            batch_size: 8,
            mask_rate: 0.15,
        };
        g.bench_function(format!("train/{variant:?}_40_docs"), |b| {
            b.iter(|| {
                let mut p = s.params.clone();
                let mut opt = AdamState::new(&p.store);
                train_epoch(&mut p, &mut opt, &set, scheme, &schedule, 0, 1).unwrap()
            })
        });
        g.bench_function(format!("predict/{variant:?}_40_docs"), |b| {
            b.iter(|| predict_corpus(&s.params, set.docs()).unwrap())
        });
    }
    g.finish();
}

fn erasure(c: &mut Criterion) {
    let s = setup(Variant::Mlm, 40);
    c.bench_function("erase/last_layer", |b| {
        b.iter(|| {
            let mut p = s.params.clone();
            erase_last_layer(&mut p, 0.5, 3).unwrap()
        })
    });
    c.bench_function("erase/pruning", |b| {
        b.iter(|| {
            let mut p = s.params.clone();
            erase_pruning(&mut p, 0.01, 0.2, 3).unwrap()
        })
    });
}

criterion_group!(benches, model, training, erasure);
criterion_main!(benches);
