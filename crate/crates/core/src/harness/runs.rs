use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Curve, ExperimentConfig};
use super::data::ExperimentData;
use super::manifest::{
    RunKind, RunManifest, Stopwatch, DOWNSTREAM_FILE, ERASURE_FILE, METRICS_FILE,
};
use crate::downstream::{build_marker_task, evaluate_f1, train_classifier, LabeledExample};
use crate::error::{Result, SaniError};
use crate::metrics::{write_metrics_csv, Measurement, MetricsRecord, Phase};
use crate::model::{Checkpoint, ModelParams, Variant};
use crate::ndtensor::AdamState;
use crate::objectives::{train_epoch, Scheme, TrainSchedule};
use crate::seeding::derive_seed;
use crate::unlearn::{erase, repair_observed, Strategy, UnlearnBudget};

const BASE_DIR: &str = ".base";
const CHECKPOINT_DIR: &str = "checkpoints";
const INIT_TAG: u64 = 0x1417;
const PRETRAIN_TAG: u64 = 0x9e7a;
const SANITIZE_TAG: u64 = 0x5a41;

pub fn checkpoint_name(epoch: usize) -> String {
    format!("{CHECKPOINT_DIR}/epoch-{epoch}.sani")
}

pub fn terms_name(epoch: usize) -> String {
    format!("terms-epoch-{epoch}.csv")
}

pub fn finetune_run_id(curve: Curve, seed: u64) -> String {
    format!("{curve}-s{seed}")
}

fn variant_tag(v: Variant) -> u64 {
    match v {
        Variant::Mlm => 1,
        Variant::Clm => 2,
    }
}

/// Files of one run directory; the manifest lists them in sorted order.
struct RunWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunWriter {
    fn create(dir: PathBuf) -> Result<Self> {
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| SaniError::io(&dir, e))?;
        }
        let ck = dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&ck).map_err(|e| SaniError::io(&ck, e))?;
        Ok(Self { dir, files: vec![] })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| SaniError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn checkpoint(&mut self, ck: &Checkpoint) -> Result<()> {
        let name = checkpoint_name(ck.epoch as usize);
        ck.save(&self.dir.join(&name))?;
        self.files.push(name);
        Ok(())
    }

    fn measurement(&mut self, m: &Measurement) -> Result<()> {
        self.write(&terms_name(m.record.epoch), &m.identifier_table.to_csv()?)
    }

    fn metrics(&mut self, records: &[MetricsRecord]) -> Result<()> {
        write_metrics_csv(&self.dir.join(METRICS_FILE), records)?;
        self.files.push(METRICS_FILE.to_string());
        Ok(())
    }

    fn finish(mut self, manifest: RunManifest) -> Result<RunManifest> {
        self.files.sort();
        self.files.dedup();
        let manifest = RunManifest {
            files: self.files,
            ..manifest
        };
        manifest.save(&self.dir)?;
        Ok(manifest)
    }
}

/// Epoch-0 model of `seed`: a fresh initialization trained with the
/// standard objective on the training text with every annotated span
/// removed. Cached under the output directory.
pub fn base_model(cfg: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<ModelParams> {
    let variant = data.variant;
    let model_cfg = cfg
        .model
        .config(variant, data.vocab.len(), derive_seed(&[seed, INIT_TAG, variant_tag(variant)]));
    let dir = cfg.output_dir.join(BASE_DIR);
    let path = dir.join(format!("{}-s{seed}-{}.sani", variant_name(variant), &cfg.source_sha256[..12]));
    if path.is_file() {
        let ck = Checkpoint::load(&path)?;
        if ck.params.config == model_cfg {
            return Ok(ck.params);
        }
    }
    let mut params = ModelParams::init(&model_cfg)?;
    let schedule = TrainSchedule {
        total_epochs: cfg.pretrain_epochs,
        ..cfg.schedule.clone()
    };
    let mut opt = AdamState::new(&params.store);
    let scheme = Scheme::standard_for(variant);
    let pre_seed = derive_seed(&[seed, PRETRAIN_TAG]);
    for e in 0..cfg.pretrain_epochs {
        let stats = train_epoch(&mut params, &mut opt, &data.base, scheme, &schedule, e, pre_seed)?;
        log::info!("base {variant:?} s{seed} epoch {}/{}: loss {:.4}", e + 1, cfg.pretrain_epochs, stats.loss);
    }
    std::fs::create_dir_all(&dir).map_err(|e| SaniError::io(&dir, e))?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    Checkpoint::new(params.clone()).save(&tmp)?;
    std::fs::rename(&tmp, &path).map_err(|e| SaniError::io(&path, e))?;
    Ok(params)
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Mlm => "mlm",
        Variant::Clm => "clm",
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub manifest: RunManifest,
    pub records: Vec<MetricsRecord>,
    pub dir: PathBuf,
}

/// Fine-tunes the base model of `seed` along `curve`, measuring and
/// checkpointing at every measurement point.
pub fn run_finetune(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    curve: Curve,
    seed: u64,
) -> Result<FinetuneOutcome> {
    if curve.variant() != data.variant {
        return Err(SaniError::Config(format!(
            "curve {curve} needs {:?} data, got {:?}",
            curve.variant(),
            data.variant
        )));
    }
    let run = finetune_run_id(curve, seed);
    let dir = cfg.output_dir.join(&run);
    let mut out = RunWriter::create(dir.clone())?;
    let mut clock = Stopwatch::default();
    let ev = data.evaluator();
    let points = cfg.measurement_points();
    let schedule = cfg.finetune_schedule();
    let set = data.set_for(curve);

    let mut params = clock.time("base", || base_model(cfg, data, seed))?;
    let mut opt = AdamState::new(&params.store);
    let mut records = vec![];
    for epoch in 0..=cfg.finetune_epochs {
        if epoch > 0 {
            let stats = clock.time("train", || {
                train_epoch(&mut params, &mut opt, set, curve.scheme(), &schedule, epoch - 1, seed)
            })?;
            log::info!("{run} epoch {epoch}/{}: loss {:.4}", cfg.finetune_epochs, stats.loss);
        }
        if points.contains(&epoch) {
            let m = clock.time("measure", || ev.measure(&params, &run, epoch, Phase::Finetune))?;
            out.measurement(&m)?;
            records.push(m.record);
            out.checkpoint(&Checkpoint {
                params: params.clone(),
                optimizer: Some(opt.clone()),
                epoch: epoch as u64,
                rng_seed: seed,
            })?;
        }
    }
    out.metrics(&records)?;
    let manifest = out.finish(RunManifest {
        run,
        kind: RunKind::Finetune,
        variant: data.variant,
        curve: Some(curve),
        strategy: None,
        source: None,
        source_epoch: None,
        seed,
        config_sha256: cfg.source_sha256.clone(),
        files: vec![],
        wall_clock: clock.finish(),
    })?;
    Ok(FinetuneOutcome {
        manifest,
        records,
        dir,
    })
}

/// Run a checkpoint belongs to: the directory above `checkpoints/`, or the
/// file stem for a checkpoint outside a run directory.
pub fn source_of(checkpoint: &Path) -> String {
    let parent = checkpoint.parent();
    match parent.and_then(|p| p.file_name()) {
        Some(n) if n == CHECKPOINT_DIR => parent
            .and_then(Path::parent)
            .and_then(Path::file_name)
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        _ => checkpoint
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    }
}

pub fn sanitize_run_id(strategy: Strategy, source: &str, epoch: usize, final_epoch: usize) -> String {
    if epoch == final_epoch {
        format!("{}-{source}", strategy.slug())
    } else {
        format!("{}-{source}-e{epoch}", strategy.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamRecord {
    pub run: String,
    pub epoch: usize,
    pub phase: Phase,
    pub macro_f1: f64,
}

pub fn downstream_to_csv(rows: &[DownstreamRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| SaniError::csv("downstream csv", e))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SaniError::csv("downstream csv", e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn downstream_from_csv(text: &str) -> Result<Vec<DownstreamRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| SaniError::csv("downstream csv", e)))
        .collect()
}

struct Downstream {
    train: Vec<LabeledExample>,
    test: Vec<LabeledExample>,
}

impl Downstream {
    fn build(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Option<Self>> {
        let Some(spec) = &cfg.downstream else {
            return Ok(None);
        };
        if data.variant != Variant::Mlm {
            log::info!("downstream task skipped for a decoder");
            return Ok(None);
        }
        let task = build_marker_task(
            data.train.docs(),
            &data.heldout,
            &data.vocab,
            spec.classifier.classes,
            spec.n_train,
            spec.n_test,
            spec.max_words,
            spec.classifier.seed,
        )?;
        log::info!("downstream markers: {}", task.markers.join(" "));
        Ok(Some(Self {
            train: task.train.iter().map(|r| r.encode(&data.vocab)).collect(),
            test: task.test.iter().map(|r| r.encode(&data.vocab)).collect(),
        }))
    }

    fn f1(&self, cfg: &ExperimentConfig, encoder: &ModelParams) -> Result<f64> {
        let spec = cfg.downstream.as_ref().expect("downstream configured");
        let (clf, _) = train_classifier(encoder, &self.train, &self.test, &spec.classifier)?;
        evaluate_f1(&clf, &self.test)
    }
}

#[derive(Debug, Clone)]
pub struct SanitizeOutcome {
    pub manifest: RunManifest,
    pub records: Vec<MetricsRecord>,
    pub downstream: Vec<DownstreamRecord>,
    pub dir: PathBuf,
}

/// Erases and repairs the model in `checkpoint`. The repair budget follows
/// the checkpoint's epoch count; measurements follow erasure and each
/// repair epoch listed in `repair_measure_epochs` (all by default).
pub fn run_sanitize(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    checkpoint: &Path,
    strategy: Strategy,
) -> Result<SanitizeOutcome> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.expect_variant(data.variant)?;
    if ck.params.config.vocab_size != data.vocab.len() {
        return Err(SaniError::Config(format!(
            "checkpoint vocabulary has {} entries, corpus has {}",
            ck.params.config.vocab_size,
            data.vocab.len()
        )));
    }
    let source = source_of(checkpoint);
    let source_epoch = ck.epoch as usize;
    let run = sanitize_run_id(strategy, &source, source_epoch, cfg.finetune_epochs);
    let dir = cfg.output_dir.join(&run);
    let mut out = RunWriter::create(dir.clone())?;
    let mut clock = Stopwatch::default();
    let ev = data.evaluator();
    let budget = UnlearnBudget::new(source_epoch);
    let seed = derive_seed(&[ck.rng_seed, SANITIZE_TAG, source_epoch as u64]);
    let scheme = Scheme::private_for(data.variant);
    let downstream = Downstream::build(cfg, data)?;

    let mut f1_rows = vec![];
    if let Some(task) = &downstream {
        let f1 = clock.time("downstream", || task.f1(cfg, &ck.params))?;
        f1_rows.push(DownstreamRecord {
            run: source.clone(),
            epoch: source_epoch,
            phase: Phase::Finetune,
            macro_f1: f1,
        });
    }

    let mut params = ck.params.clone();
    let report = clock.time("erase", || erase(&mut params, strategy, seed))?;
    out.write(
        ERASURE_FILE,
        &(serde_json::to_string_pretty(&report).map_err(|e| SaniError::json("erasure report", e))? + "\n"),
    )?;
    let m = clock.time("measure", || ev.measure(&params, &run, source_epoch, Phase::Erase))?;
    out.measurement(&m)?;
    let mut records = vec![m.record];

    let wanted = cfg.repair_measure_epochs.clone();
    let mut clock_cell = clock;
    let mut repair_clock = std::time::Instant::now();
    repair_observed(
        &mut params,
        data.set_for(private_curve(data.variant)),
        &budget,
        scheme,
        &cfg.repair_schedule(),
        seed,
        |epoch, p| {
            let repaired = epoch - source_epoch;
            clock_cell.add("repair", repair_clock.elapsed().as_secs_f64());
            out.checkpoint(&Checkpoint {
                params: p.clone(),
                optimizer: None,
                epoch: epoch as u64,
                rng_seed: ck.rng_seed,
            })?;
            if wanted.as_ref().is_none_or(|w| w.contains(&repaired)) {
                let m = clock_cell.time("measure", || ev.measure(p, &run, epoch, Phase::Repair))?;
                out.measurement(&m)?;
                records.push(m.record);
            }
            if let Some(task) = &downstream {
                let f1 = clock_cell.time("downstream", || task.f1(cfg, p))?;
                f1_rows.push(DownstreamRecord {
                    run: run.clone(),
                    epoch,
                    phase: Phase::Repair,
                    macro_f1: f1,
                });
            }
            repair_clock = std::time::Instant::now();
            Ok(())
        },
    )?;
    out.metrics(&records)?;
    if downstream.is_some() {
        out.write(DOWNSTREAM_FILE, &downstream_to_csv(&f1_rows)?)?;
    }
    let manifest = out.finish(RunManifest {
        run,
        kind: RunKind::Sanitize,
        variant: data.variant,
        curve: None,
        strategy: Some(strategy),
        source: Some(source),
        source_epoch: Some(source_epoch),
        seed: ck.rng_seed,
        config_sha256: cfg.source_sha256.clone(),
        files: vec![],
        wall_clock: clock_cell.finish(),
    })?;
    Ok(SanitizeOutcome {
        manifest,
        records,
        downstream: f1_rows,
        dir,
    })
}

fn private_curve(v: Variant) -> Curve {
    match v {
        Variant::Mlm => Curve::Ppmlm,
        Variant::Clm => Curve::Ppclm,
    }
}

/// Measures a checkpoint against the experiment's corpus.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<Measurement> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = ExperimentData::load(cfg, ck.params.config.variant)?;
    if ck.params.config.vocab_size != data.vocab.len() {
        return Err(SaniError::Config(format!(
            "checkpoint vocabulary has {} entries, corpus has {}",
            ck.params.config.vocab_size,
            data.vocab.len()
        )));
    }
    data.evaluator()
        .measure(&ck.params, &source_of(checkpoint), ck.epoch as usize, Phase::Finetune)
}
