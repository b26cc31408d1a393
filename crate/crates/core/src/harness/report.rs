//! Figure-analogue CSVs assembled from stored run outputs only.
//!
//! | file | columns |
//! |------|---------|
//! | fig1a, fig4a | series, epoch, phase, seeds, mean, min, max (privacy) |
//! | fig1b, fig4b | same, utility |
//! | fig2a | series, unlearning_epoch, phase, seeds, privacy, regurgitation, events (means) |
//! | fig2b | series, unlearning_epoch, seeds, mean, min, max (macro F1) |
//! | fig3a | seed, term, repetitions, events, spearman |
//! | fig3b | series, seed, term, repetitions, cumulative_events |
//!
//! Fig 1 and 2 use the encoder, Fig 4 the decoder. Sanitization series come
//! from runs whose source is the final checkpoint of the unprotected curve.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::config::Curve;
use super::manifest::{RunKind, RunManifest, DOWNSTREAM_FILE, MANIFEST_FILE, METRICS_FILE};
use super::runs::{downstream_from_csv, terms_name, DownstreamRecord};
use crate::error::{Result, SaniError};
use crate::metrics::{frequency_analysis, read_metrics_csv, MetricsRecord, Phase, TermTable};
use crate::model::Variant;
use crate::unlearn::Strategy;

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone)]
struct Run {
    manifest: RunManifest,
    dir: PathBuf,
    metrics: Vec<MetricsRecord>,
}

impl Run {
    fn final_epoch(&self) -> usize {
        self.metrics.iter().map(|r| r.epoch).max().unwrap_or(0)
    }

    fn terms(&self, epoch: usize) -> Result<Option<TermTable>> {
        let name = terms_name(epoch);
        if !self.manifest.files.contains(&name) {
            return Ok(None);
        }
        let path = self.dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|e| SaniError::io(&path, e))?;
        TermTable::from_csv(&text).map(Some)
    }

    fn downstream(&self) -> Result<Option<Vec<DownstreamRecord>>> {
        if !self.manifest.files.iter().any(|f| f == DOWNSTREAM_FILE) {
            return Ok(None);
        }
        let path = self.dir.join(DOWNSTREAM_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| SaniError::io(&path, e))?;
        downstream_from_csv(&text).map(Some)
    }
}

fn phase_rank(p: Phase) -> u8 {
    match p {
        Phase::Finetune => 0,
        Phase::Erase => 1,
        Phase::Repair => 2,
    }
}

fn load_runs(dir: &Path) -> Result<Vec<Run>> {
    let mut missing = vec![];
    let mut runs = vec![];
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| SaniError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            !name.starts_with('.') && name != REPORT_DIR
        })
        .collect();
    entries.sort();
    for d in entries {
        let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if !d.join(MANIFEST_FILE).is_file() {
            missing.push(format!("{name}/{MANIFEST_FILE}"));
            continue;
        }
        let manifest = RunManifest::load(&d)?;
        let absent: Vec<String> = manifest
            .files
            .iter()
            .filter(|f| !d.join(f).is_file())
            .map(|f| format!("{name}/{f}"))
            .collect();
        if !manifest.files.iter().any(|f| f == METRICS_FILE) && absent.is_empty() {
            missing.push(format!("{name}/{METRICS_FILE}"));
            continue;
        }
        if !absent.is_empty() {
            missing.extend(absent);
            continue;
        }
        let metrics = read_metrics_csv(&d.join(METRICS_FILE))?;
        runs.push(Run {
            manifest,
            dir: d,
            metrics,
        });
    }
    if runs.is_empty() && missing.is_empty() {
        missing.push(format!("{}: no runs", dir.display()));
    }
    check_complete(&runs, &mut missing);
    if missing.is_empty() {
        Ok(runs)
    } else {
        Err(SaniError::IncompleteRuns(missing))
    }
}

fn check_complete(runs: &[Run], missing: &mut Vec<String>) {
    let ids: BTreeSet<&str> = runs.iter().map(|r| r.manifest.run.as_str()).collect();
    for variant in [Variant::Mlm, Variant::Clm] {
        let of_variant: Vec<&Run> = runs.iter().filter(|r| r.manifest.variant == variant).collect();
        let seeds: BTreeSet<u64> = of_variant
            .iter()
            .filter(|r| r.manifest.kind == RunKind::Finetune)
            .map(|r| r.manifest.seed)
            .collect();
        for &seed in &seeds {
            for curve in Curve::of(variant) {
                let id = super::runs::finetune_run_id(curve, seed);
                if !ids.contains(id.as_str()) {
                    missing.push(format!("run {id}"));
                }
            }
        }
        let sanitize: Vec<&&Run> = of_variant
            .iter()
            .filter(|r| r.manifest.kind == RunKind::Sanitize)
            .collect();
        let strategies: BTreeSet<&str> = sanitize
            .iter()
            .filter_map(|r| r.manifest.strategy.map(Strategy::slug))
            .collect();
        let sources: BTreeSet<(&str, usize)> = sanitize
            .iter()
            .filter_map(|r| Some((r.manifest.source.as_deref()?, r.manifest.source_epoch?)))
            .collect();
        for &(source, epoch) in &sources {
            if !ids.contains(source) {
                missing.push(format!("run {source}"));
            }
            for &s in &strategies {
                let found = sanitize.iter().any(|r| {
                    r.manifest.source.as_deref() == Some(source)
                        && r.manifest.source_epoch == Some(epoch)
                        && r.manifest.strategy.map(Strategy::slug) == Some(s)
                });
                if !found {
                    missing.push(format!("run {s}-{source} (epoch {epoch})"));
                }
            }
        }
        let with_f1 = sanitize
            .iter()
            .filter(|r| r.manifest.files.iter().any(|f| f == DOWNSTREAM_FILE))
            .count();
        if with_f1 > 0 && with_f1 < sanitize.len() {
            for r in sanitize.iter().filter(|r| !r.manifest.files.iter().any(|f| f == DOWNSTREAM_FILE)) {
                missing.push(format!("{}/{DOWNSTREAM_FILE}", r.manifest.run));
            }
        }
    }
}

/// Sanitize runs whose source is the final checkpoint of `curve`'s run of
/// the same seed.
fn sanitized_from<'a>(runs: &'a [Run], curve: Curve) -> Vec<(&'a Run, &'a Run)> {
    let mut out = vec![];
    for src in runs.iter().filter(|r| r.manifest.curve == Some(curve)) {
        for r in runs.iter().filter(|r| r.manifest.kind == RunKind::Sanitize) {
            if r.manifest.source.as_deref() == Some(src.manifest.run.as_str())
                && r.manifest.source_epoch == Some(src.final_epoch())
            {
                out.push((src, r));
            }
        }
    }
    out
}

fn strategy_order(r: &Run) -> usize {
    r.manifest
        .strategy
        .and_then(|s| Strategy::ALL.iter().position(|&x| x == s))
        .unwrap_or(usize::MAX)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Mean, min and max of each (series, epoch, phase) group across seeds.
fn aggregate(series: &[(String, Vec<(&MetricsRecord, f64)>)]) -> Vec<Vec<String>> {
    let mut rows = vec![];
    for (name, points) in series {
        let mut groups: BTreeMap<(usize, u8), (Phase, Vec<f64>)> = BTreeMap::new();
        for (r, v) in points {
            groups
                .entry((r.epoch, phase_rank(r.phase)))
                .or_insert_with(|| (r.phase, vec![]))
                .1
                .push(*v);
        }
        for ((epoch, _), (phase, vals)) in groups {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            rows.push(vec![
                name.clone(),
                epoch.to_string(),
                phase.to_string(),
                vals.len().to_string(),
                fmt(mean),
                fmt(min),
                fmt(max),
            ]);
        }
    }
    rows
}

fn curve_figure(runs: &[Run], variant: Variant, value: fn(&MetricsRecord) -> f64) -> Vec<Vec<String>> {
    let curves = Curve::of(variant);
    let mut series: Vec<(String, Vec<(&MetricsRecord, f64)>)> = vec![];
    for curve in curves {
        let mut pts = vec![];
        for r in runs.iter().filter(|r| r.manifest.curve == Some(curve)) {
            pts.extend(r.metrics.iter().map(|m| (m, value(m))));
        }
        series.push((curve.name().to_string(), pts));
    }
    let mut sanitized = sanitized_from(runs, curves[0]);
    sanitized.sort_by_key(|(_, r)| strategy_order(r));
    for (_, r) in sanitized {
        let name = r.manifest.strategy.map(Strategy::slug).unwrap_or("?").to_string();
        let pts = r.metrics.iter().map(|m| (m, value(m)));
        match series.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => v.extend(pts),
            None => series.push((name, pts.collect())),
        }
    }
    aggregate(&series)
}

fn fig2a(runs: &[Run]) -> Vec<Vec<String>> {
    let mut sanitized = sanitized_from(runs, Curve::Mlm);
    sanitized.sort_by_key(|(_, r)| strategy_order(r));
    let mut groups: BTreeMap<(usize, usize, u8), (String, Phase, Vec<&MetricsRecord>)> = BTreeMap::new();
    let mut sources = BTreeSet::new();
    for (src, r) in &sanitized {
        if sources.insert(src.manifest.run.clone()) {
            let last = src.metrics.iter().max_by_key(|m| m.epoch).expect("metrics present");
            groups
                .entry((0, 0, 0))
                .or_insert_with(|| ("original".into(), Phase::Finetune, vec![]))
                .2
                .push(last);
        }
        let base = r.manifest.source_epoch.unwrap_or(0);
        let name = r.manifest.strategy.map(Strategy::slug).unwrap_or("?").to_string();
        for m in &r.metrics {
            groups
                .entry((1 + strategy_order(r), m.epoch - base, phase_rank(m.phase)))
                .or_insert_with(|| (name.clone(), m.phase, vec![]))
                .2
                .push(m);
        }
    }
    groups
        .into_iter()
        .map(|((_, ue, _), (name, phase, ms))| {
            let n = ms.len() as f64;
            vec![
                name,
                ue.to_string(),
                phase.to_string(),
                ms.len().to_string(),
                fmt(ms.iter().map(|m| m.privacy).sum::<f64>() / n),
                fmt(ms.iter().map(|m| m.regurgitation).sum::<f64>() / n),
                fmt(ms.iter().map(|m| m.events as f64).sum::<f64>() / n),
            ]
        })
        .collect()
}

fn fig2b(runs: &[Run]) -> Result<Vec<Vec<String>>> {
    let mut sanitized = sanitized_from(runs, Curve::Mlm);
    sanitized.sort_by_key(|(_, r)| strategy_order(r));
    let mut groups: BTreeMap<(usize, usize), (String, Vec<f64>)> = BTreeMap::new();
    let mut sources = BTreeSet::new();
    for (src, r) in &sanitized {
        let Some(rows) = r.downstream()? else { continue };
        let base = r.manifest.source_epoch.unwrap_or(0);
        let name = r.manifest.strategy.map(Strategy::slug).unwrap_or("?").to_string();
        for d in rows {
            if d.phase == Phase::Finetune {
                if sources.insert(src.manifest.run.clone()) {
                    groups.entry((0, 0)).or_insert_with(|| ("original".into(), vec![])).1.push(d.macro_f1);
                }
            } else {
                groups
                    .entry((1 + strategy_order(r), d.epoch - base))
                    .or_insert_with(|| (name.clone(), vec![]))
                    .1
                    .push(d.macro_f1);
            }
        }
    }
    Ok(groups
        .into_iter()
        .map(|((_, ue), (name, vals))| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![name, ue.to_string(), vals.len().to_string(), fmt(mean), fmt(min), fmt(max)]
        })
        .collect())
}

fn fig3(runs: &[Run]) -> Result<(Vec<Vec<String>>, Vec<Vec<String>>)> {
    let mut scatter = vec![];
    let mut cumulative = vec![];
    let mut sources: Vec<&Run> = runs.iter().filter(|r| r.manifest.curve == Some(Curve::Mlm)).collect();
    sources.sort_by_key(|r| r.manifest.seed);
    for src in sources {
        let seed = src.manifest.seed.to_string();
        let fe = src.final_epoch();
        let Some(table) = src.terms(fe)? else { continue };
        let fa = frequency_analysis(&table);
        for row in &fa.scatter {
            scatter.push(vec![
                seed.clone(),
                row.term.clone(),
                row.repetitions.to_string(),
                row.events.to_string(),
                fmt(fa.spearman),
            ]);
        }
        let mut series = vec![("finetuned".to_string(), fa)];
        let sani = runs.iter().find(|r| {
            r.manifest.strategy == Some(Strategy::Sani)
                && r.manifest.source.as_deref() == Some(src.manifest.run.as_str())
                && r.manifest.source_epoch == Some(fe)
        });
        if let Some(sani) = sani {
            for k in 1..=2 {
                if let Some(t) = sani.terms(fe + k)? {
                    series.push((format!("sani-repair-{k}"), frequency_analysis(&t)));
                }
            }
        }
        for (name, fa) in series {
            for row in fa.cumulative {
                cumulative.push(vec![
                    name.clone(),
                    seed.clone(),
                    row.term,
                    row.repetitions.to_string(),
                    row.cumulative_events.to_string(),
                ]);
            }
        }
    }
    Ok((scatter, cumulative))
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(vec![]);
    let ctx = |e| SaniError::csv(path.display().to_string(), e);
    w.write_record(header).map_err(ctx)?;
    for r in rows {
        w.write_record(r).map_err(ctx)?;
    }
    let bytes = w.into_inner().map_err(|e| ctx(e.into_error().into()))?;
    std::fs::write(path, bytes).map_err(|e| SaniError::io(path, e))
}

const CURVE_HEADER: [&str; 7] = ["series", "epoch", "phase", "seeds", "mean", "min", "max"];

/// Writes the figure CSVs under `dir/report/` and returns their paths.
/// Figures without any input runs are skipped.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let runs = load_runs(dir)?;
    let out = dir.join(REPORT_DIR);
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| SaniError::io(&out, e))?;
    }
    std::fs::create_dir_all(&out).map_err(|e| SaniError::io(&out, e))?;
    let mut written = vec![];
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let path = out.join(name);
        write_csv(&path, header, &rows)?;
        written.push(path);
        Ok(())
    };
    for (variant, a, b) in [
        (Variant::Mlm, "fig1a.csv", "fig1b.csv"),
        (Variant::Clm, "fig4a.csv", "fig4b.csv"),
    ] {
        emit(a, &CURVE_HEADER, curve_figure(&runs, variant, |m| m.privacy))?;
        emit(b, &CURVE_HEADER, curve_figure(&runs, variant, |m| m.utility))?;
    }
    emit(
        "fig2a.csv",
        &["series", "unlearning_epoch", "phase", "seeds", "privacy", "regurgitation", "events"],
        fig2a(&runs),
    )?;
    emit(
        "fig2b.csv",
        &["series", "unlearning_epoch", "seeds", "mean", "min", "max"],
        fig2b(&runs)?,
    )?;
    let (scatter, cumulative) = fig3(&runs)?;
    emit("fig3a.csv", &["seed", "term", "repetitions", "events", "spearman"], scatter)?;
    emit(
        "fig3b.csv",
        &["series", "seed", "term", "repetitions", "cumulative_events"],
        cumulative,
    )?;
    Ok(written)
}
