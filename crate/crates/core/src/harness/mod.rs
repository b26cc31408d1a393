//! Experiment orchestration: fine-tuning curves, sanitization runs,
//! evaluation and figure reports, all written under one output directory.
//!
//! ```text
//! <output_dir>/
//!   .base/                 cached epoch-0 models
//!   <curve>-s<seed>/       fine-tuning runs
//!   <strategy>-<source>/   sanitization runs
//!   report/                figure CSVs
//! ```
//!
//! Each run directory holds `metrics.csv`, `terms-epoch-N.csv`,
//! `checkpoints/epoch-N.sani`, `manifest.json` and, for sanitization,
//! `erasure.json` and (encoder only) `downstream.csv`.

mod config;
mod data;
mod manifest;
mod report;
mod runs;

pub use config::{
    BlacklistPaths, Curve, DownstreamSpec, ExperimentConfig, ModelSpec, Target,
};
pub use data::ExperimentData;
pub use manifest::{
    PhaseTiming, RunKind, RunManifest, DOWNSTREAM_FILE, ERASURE_FILE, MANIFEST_FILE, METRICS_FILE,
};
pub use report::{cmd_report, REPORT_DIR};
pub use runs::{
    base_model, checkpoint_name, downstream_from_csv, downstream_to_csv, finetune_run_id,
    run_eval, run_finetune, run_sanitize, sanitize_run_id, source_of, terms_name,
    DownstreamRecord, FinetuneOutcome, SanitizeOutcome,
};

#[cfg(test)]
mod tests;
