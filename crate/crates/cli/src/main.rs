use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use sani_core::corpus::{generate_synthetic_corpus, GenConfig};
use sani_core::harness::{
    cmd_report, run_eval, run_finetune, run_sanitize, Curve, ExperimentConfig, ExperimentData,
};
use sani_core::metrics::metrics_to_csv;
use sani_core::model::Checkpoint;
use sani_core::unlearn::Strategy;
use sani_core::{Result, SaniError};

#[derive(Parser)]
#[command(name = "sani", version, about = "Erase-and-repair sanitization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic annotated corpus and its blacklists.
    GenCorpus {
        #[arg(short, long)]
        config: PathBuf,
        /// Defaults to the directory of the config file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fine-tune one curve for every configured seed.
    Finetune {
        #[arg(short, long)]
        config: PathBuf,
        /// mlm, mlmA, ppmlm, clm, clmA or ppclm.
        #[arg(long)]
        curve: Curve,
        /// Only this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Erase and repair a checkpoint.
    Sanitize {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long = "from")]
        from: PathBuf,
        /// sani, pruning or repair-only; every configured strategy when
        /// omitted.
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Measure a checkpoint; prints the metrics row and the term table.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Consolidate run outputs into figure CSVs.
    Report {
        #[arg(short = 'd', long = "dir")]
        dir: PathBuf,
    },
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SANI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| SaniError::Config(format!("SANI_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| SaniError::Config(format!("thread pool: {e}")))
}

fn gen_corpus(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let cfg = GenConfig::load(config)?;
    let dir = out.unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")).to_path_buf());
    let corpus = generate_synthetic_corpus(&cfg)?;
    corpus.write_to(&dir)?;
    println!("wrote {} documents to {}", corpus.docs.len(), dir.display());
    Ok(())
}

fn finetune(config: &Path, curve: Curve, seed: Option<u64>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let data = ExperimentData::load(&cfg, curve.variant())?;
    let outcomes = seeds
        .par_iter()
        .map(|&s| run_finetune(&cfg, &data, curve, s))
        .collect::<Result<Vec<_>>>()?;
    for o in outcomes {
        let last = o.records.last().expect("final epoch is measured");
        println!(
            "{}: epoch {} privacy {:.4} utility {:.4} -> {}",
            o.manifest.run,
            last.epoch,
            last.privacy,
            last.utility,
            o.dir.display()
        );
    }
    Ok(())
}

fn sanitize(config: &Path, from: &Path, strategy: Option<Strategy>) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let variant = Checkpoint::load(from)?.params.config.variant;
    let data = ExperimentData::load(&cfg, variant)?;
    let strategies = match strategy {
        Some(s) => vec![s],
        None => cfg.strategies.clone(),
    };
    let outcomes = strategies
        .par_iter()
        .map(|&s| run_sanitize(&cfg, &data, from, s))
        .collect::<Result<Vec<_>>>()?;
    for out in outcomes {
        print!("{}", metrics_to_csv(&out.records)?);
        println!("-> {}", out.dir.display());
    }
    Ok(())
}

fn eval(ckpt: &Path, config: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let m = run_eval(&cfg, ckpt)?;
    print!("{}", metrics_to_csv(std::slice::from_ref(&m.record))?);
    println!();
    print!("{}", m.identifier_table.to_csv()?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::GenCorpus { config, out } => gen_corpus(&config, out),
        Command::Finetune { config, curve, seed } => finetune(&config, curve, seed),
        Command::Sanitize {
            config,
            from,
            strategy,
        } => sanitize(&config, &from, strategy),
        Command::Eval { ckpt, config } => eval(&ckpt, &config),
        Command::Report { dir } => {
            for p in cmd_report(&dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
