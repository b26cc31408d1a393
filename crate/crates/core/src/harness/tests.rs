use std::path::{Path, PathBuf};

use super::*;
use crate::corpus::{generate_synthetic_corpus, CONF_FILE, CORPUS_FILE, DIRECT_FILE, INDIRECT_FILE};
use crate::metrics::{read_metrics_csv, Phase};
use crate::testutil::small_gen;
use crate::unlearn::Strategy;
use crate::SaniError;

fn config_json(out: &str) -> String {
    format!(
        r#"{{
  "corpus": "{CORPUS_FILE}",
  "blacklists": {{"direct": "{DIRECT_FILE}", "indirect": "{INDIRECT_FILE}", "conf": "{CONF_FILE}"}},
  "model": {{"n_layers": 1, "n_heads": 2, "d_model": 16, "d_ff": 32, "max_seq": 64}},
  "pretrain_epochs": 1,
  "finetune_epochs": 3,
  "measure_epochs": [2],
  "schedule": {{"total_epochs": 3, "lr_start": 0.003, "batch_size": 8, "mask_rate": 0.15}},
  "seeds": [1],
  "downstream": {{"n_train": 16, "n_test": 8, "max_words": 12,
                  "classifier": {{"classes": 4, "epochs": 1, "peak_lr": 0.001, "batch_size": 8}}}},
  "output_dir": "{out}"
}}"#
    )
}

fn workspace() -> (tempfile::TempDir, ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&small_gen()).unwrap().write_to(dir.path()).unwrap();
    let cfg = ExperimentConfig::from_json(&config_json("runs"), dir.path()).unwrap();
    (dir, cfg)
}

fn final_checkpoint(cfg: &ExperimentConfig, curve: Curve, seed: u64) -> PathBuf {
    cfg.output_dir
        .join(finetune_run_id(curve, seed))
        .join(checkpoint_name(cfg.finetune_epochs))
}

fn run_variant(cfg: &ExperimentConfig, variant: crate::model::Variant) {
    let data = ExperimentData::load(cfg, variant).unwrap();
    for curve in Curve::of(variant) {
        run_finetune(cfg, &data, curve, 1).unwrap();
    }
    let ck = final_checkpoint(cfg, Curve::of(variant)[0], 1);
    for s in Strategy::ALL {
        run_sanitize(cfg, &data, &ck, s).unwrap();
    }
}

#[test]
fn measurement_epochs_must_lie_in_range() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(&small_gen()).unwrap().write_to(dir.path()).unwrap();
    let text = config_json("runs").replace("[2]", "[4]");
    assert!(matches!(
        ExperimentConfig::from_json(&text, dir.path()),
        Err(SaniError::Config(_))
    ));
    let text = config_json("runs").replace("[2]", "[0]");
    assert!(ExperimentConfig::from_json(&text, dir.path()).unwrap_err().is_config_error());
}

#[test]
fn missing_files_and_unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = ExperimentConfig::from_json(&config_json("runs"), dir.path()).unwrap_err();
    assert!(err.is_config_error(), "{err}");
    generate_synthetic_corpus(&small_gen()).unwrap().write_to(dir.path()).unwrap();
    let text = config_json("runs").replace("\"seeds\"", "\"colour\": 1, \"seeds\"");
    assert!(ExperimentConfig::from_json(&text, dir.path()).unwrap_err().is_config_error());
}

#[test]
fn config_hash_tracks_every_byte() {
    let (dir, cfg) = workspace();
    let same = ExperimentConfig::from_json(&config_json("runs"), dir.path()).unwrap();
    assert_eq!(cfg.source_sha256, same.source_sha256);
    let spaced = config_json("runs") + " ";
    let other = ExperimentConfig::from_json(&spaced, dir.path()).unwrap();
    assert_ne!(cfg.source_sha256, other.source_sha256);
}

#[test]
fn measurement_points_include_start_and_end() {
    let (_d, cfg) = workspace();
    assert_eq!(cfg.measurement_points(), vec![0, 2, 3]);
}

#[test]
fn curve_names_round_trip() {
    for c in Curve::ALL {
        assert_eq!(c.name().parse::<Curve>().unwrap(), c);
        assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
    }
    for s in Strategy::ALL {
        assert_eq!(s.slug().parse::<Strategy>().unwrap(), s);
    }
    assert!("bert".parse::<Curve>().unwrap_err().is_config_error());
}

#[test]
fn source_is_the_run_directory() {
    assert_eq!(source_of(Path::new("/x/mlm-s1/checkpoints/epoch-16.sani")), "mlm-s1");
    assert_eq!(source_of(Path::new("/x/model.sani")), "model");
}

#[test]
fn curves_have_distinct_runs_over_one_base() {
    let (_d, cfg) = workspace();
    let data = ExperimentData::load(&cfg, crate::model::Variant::Mlm).unwrap();
    let outs: Vec<_> = Curve::of(crate::model::Variant::Mlm)
        .into_iter()
        .map(|c| run_finetune(&cfg, &data, c, 1).unwrap())
        .collect();
    let ids: Vec<&str> = outs.iter().map(|o| o.manifest.run.as_str()).collect();
    assert_eq!(ids, ["mlm-s1", "mlmA-s1", "ppmlm-s1"]);
    for o in &outs {
        let epochs: Vec<usize> = o.records.iter().map(|r| r.epoch).collect();
        assert_eq!(epochs, [0, 2, 3]);
        for e in epochs {
            assert!(o.dir.join(checkpoint_name(e)).is_file());
            assert!(o.dir.join(terms_name(e)).is_file());
        }
        assert_eq!(read_metrics_csv(&o.dir.join(METRICS_FILE)).unwrap(), o.records);
        let m = RunManifest::load(&o.dir).unwrap();
        assert_eq!(m.config_sha256, cfg.source_sha256);
        assert!(m.files.windows(2).all(|w| w[0] < w[1]));
    }
    // Shared epoch-0 model.
    assert_eq!(outs[0].records[0].privacy, outs[2].records[0].privacy);
    assert_eq!(outs[0].records[0].utility, outs[1].records[0].utility);
}

#[test]
fn sanitize_emits_budget_rows_and_downstream_scores() {
    let (_d, cfg) = workspace();
    let data = ExperimentData::load(&cfg, crate::model::Variant::Mlm).unwrap();
    run_finetune(&cfg, &data, Curve::Mlm, 1).unwrap();
    let ck = final_checkpoint(&cfg, Curve::Mlm, 1);
    let out = run_sanitize(&cfg, &data, &ck, Strategy::Sani).unwrap();
    assert_eq!(out.manifest.run, "sani-mlm-s1");
    let phases: Vec<(usize, Phase)> = out.records.iter().map(|r| (r.epoch, r.phase)).collect();
    assert_eq!(phases, [(3, Phase::Erase), (4, Phase::Repair)]);
    assert_eq!(out.downstream.len(), 2);
    assert_eq!(out.downstream[0].run, "mlm-s1");
    assert!(out.dir.join(ERASURE_FILE).is_file());
    let report: crate::unlearn::ErasureReport =
        serde_json::from_str(&std::fs::read_to_string(out.dir.join(ERASURE_FILE)).unwrap()).unwrap();
    assert_eq!(report.total_zeroed(), data.vocab.len().div_ceil(2));
}

#[test]
fn sanitize_refuses_a_checkpoint_of_the_other_variant() {
    let (_d, cfg) = workspace();
    let mlm = ExperimentData::load(&cfg, crate::model::Variant::Mlm).unwrap();
    run_finetune(&cfg, &mlm, Curve::Mlm, 1).unwrap();
    let clm = ExperimentData::load(&cfg, crate::model::Variant::Clm).unwrap();
    let err = run_sanitize(&cfg, &clm, &final_checkpoint(&cfg, Curve::Mlm, 1), Strategy::Sani).unwrap_err();
    assert!(err.is_config_error());
    assert!(run_finetune(&cfg, &clm, Curve::Mlm, 1).unwrap_err().is_config_error());
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn report_covers_every_figure_and_is_idempotent() {
    let (_d, cfg) = workspace();
    run_variant(&cfg, crate::model::Variant::Mlm);
    run_variant(&cfg, crate::model::Variant::Clm);
    let files = cmd_report(&cfg.output_dir).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for f in ["fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b"] {
        assert!(names.contains(&format!("{f}.csv")), "{f} missing from {names:?}");
    }
    let report = cfg.output_dir.join(REPORT_DIR);
    let first = read_all(&report);
    cmd_report(&cfg.output_dir).unwrap();
    assert_eq!(read_all(&report), first);

    let mut fig1a = csv::Reader::from_path(report.join("fig1a.csv")).unwrap();
    let series: std::collections::BTreeSet<String> =
        fig1a.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(series.len(), Strategy::ALL.len() + 3);

    let mut fig3b = csv::Reader::from_path(report.join("fig3b.csv")).unwrap();
    let mut last: Option<(String, u64)> = None;
    for r in fig3b.records() {
        let r = r.unwrap();
        let key = r[0].to_string();
        let v: u64 = r[4].parse().unwrap();
        if let Some((k, prev)) = &last {
            if *k == key {
                assert!(v >= *prev, "{key}: {v} after {prev}");
            }
        }
        last = Some((key, v));
    }
}

#[test]
fn report_lists_missing_runs() {
    let (_d, cfg) = workspace();
    run_variant(&cfg, crate::model::Variant::Mlm);
    std::fs::remove_dir_all(cfg.output_dir.join("mlmA-s1")).unwrap();
    std::fs::remove_file(cfg.output_dir.join("pruning-mlm-s1").join(METRICS_FILE)).unwrap();
    match cmd_report(&cfg.output_dir) {
        Err(SaniError::IncompleteRuns(missing)) => {
            assert!(missing.iter().any(|m| m.contains("mlmA-s1")), "{missing:?}");
            assert!(missing.iter().any(|m| m.contains("pruning-mlm-s1")), "{missing:?}");
        }
        other => panic!("expected IncompleteRuns, got {other:?}"),
    }
}

#[test]
fn identical_configs_give_identical_metrics() {
    let (dir, cfg) = workspace();
    let other =
        ExperimentConfig::from_json(&config_json("runs-again"), dir.path()).unwrap();
    let data = ExperimentData::load(&cfg, crate::model::Variant::Clm).unwrap();
    for c in [&cfg, &other] {
        run_finetune(c, &data, Curve::Clm, 1).unwrap();
        run_sanitize(c, &data, &final_checkpoint(c, Curve::Clm, 1), Strategy::Pruning).unwrap();
    }
    for run in ["clm-s1", "pruning-clm-s1"] {
        let a = std::fs::read(cfg.output_dir.join(run).join(METRICS_FILE)).unwrap();
        let b = std::fs::read(other.output_dir.join(run).join(METRICS_FILE)).unwrap();
        assert_eq!(a, b, "{run}");
    }
}
