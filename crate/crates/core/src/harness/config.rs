use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::downstream::ClassifierConfig;
use crate::error::{Result, SaniError};
use crate::model::{ModelConfig, Variant};
use crate::objectives::{Scheme, TrainSchedule};
use crate::unlearn::Strategy;

/// Fine-tuning curve: objective plus the corpus it trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Curve {
    #[serde(rename = "mlm")]
    Mlm,
    #[serde(rename = "mlmA")]
    MlmAnon,
    #[serde(rename = "ppmlm")]
    Ppmlm,
    #[serde(rename = "clm")]
    Clm,
    #[serde(rename = "clmA")]
    ClmAnon,
    #[serde(rename = "ppclm")]
    Ppclm,
}

impl Curve {
    pub const ALL: [Curve; 6] = [
        Curve::Mlm,
        Curve::MlmAnon,
        Curve::Ppmlm,
        Curve::Clm,
        Curve::ClmAnon,
        Curve::Ppclm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Curve::Mlm => "mlm",
            Curve::MlmAnon => "mlmA",
            Curve::Ppmlm => "ppmlm",
            Curve::Clm => "clm",
            Curve::ClmAnon => "clmA",
            Curve::Ppclm => "ppclm",
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Curve::Mlm | Curve::MlmAnon => Scheme::Mlm,
            Curve::Ppmlm => Scheme::Ppmlm,
            Curve::Clm | Curve::ClmAnon => Scheme::Clm,
            Curve::Ppclm => Scheme::Ppclm,
        }
    }

    pub fn variant(self) -> Variant {
        self.scheme().variant()
    }

    /// Trains on the pseudonymized corpus.
    pub fn anonymized(self) -> bool {
        matches!(self, Curve::MlmAnon | Curve::ClmAnon)
    }

    /// The three curves of one variant.
    pub fn of(variant: Variant) -> [Curve; 3] {
        match variant {
            Variant::Mlm => [Curve::Mlm, Curve::MlmAnon, Curve::Ppmlm],
            Variant::Clm => [Curve::Clm, Curve::ClmAnon, Curve::Ppclm],
        }
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Curve {
    type Err = SaniError;

    fn from_str(s: &str) -> Result<Self> {
        Curve::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SaniError::Config(format!("unknown curve {s:?}")))
    }
}

impl FromStr for Strategy {
    type Err = SaniError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|c| c.slug() == s)
            .ok_or_else(|| SaniError::Config(format!("unknown strategy {s:?}")))
    }
}

/// Which blacklist the privacy-preserving objectives exclude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Identifiers,
    Confidential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlacklistPaths {
    pub direct: PathBuf,
    pub indirect: PathBuf,
    pub conf: PathBuf,
}

/// Architecture; the variant follows from the curve and the vocabulary size
/// from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_seq: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let d = ModelConfig::desk(Variant::Mlm, 1, 0);
        Self {
            n_layers: d.n_layers,
            n_heads: d.n_heads,
            d_model: d.d_model,
            d_ff: d.d_ff,
            max_seq: d.max_seq,
        }
    }
}

impl ModelSpec {
    pub fn config(&self, variant: Variant, vocab_size: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            variant,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_seq: self.max_seq,
            vocab_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub max_words: usize,
    pub classifier: ClassifierConfig,
}

impl Default for DownstreamSpec {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 400,
            max_words: 32,
            classifier: ClassifierConfig::default(),
        }
    }
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_heldout() -> f64 {
    0.1
}

fn default_min_freq() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    pub blacklists: BlacklistPaths,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
    #[serde(default = "default_heldout")]
    pub heldout_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    /// Epochs of standard-objective training on the corpus with every
    /// annotated span removed, giving the epoch-0 model.
    #[serde(default)]
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub measure_epochs: Vec<usize>,
    #[serde(default)]
    pub schedule: TrainSchedule,
    /// Learning-rate schedule of the repair phase; the fine-tuning one when
    /// absent.
    #[serde(default)]
    pub repair_schedule: Option<TrainSchedule>,
    /// Repair epochs (counted from 1) measured by a sanitize run; all when
    /// absent. Post-erasure is always measured.
    #[serde(default)]
    pub repair_measure_epochs: Option<Vec<usize>>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub downstream: Option<DownstreamSpec>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub source_sha256: String,
}

impl ExperimentConfig {
    /// Parses `text`; relative paths resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Self =
            serde_json::from_str(text).map_err(|e| SaniError::json("experiment config", e))?;
        cfg.source_sha256 = hex::encode(Sha256::digest(text.as_bytes()));
        for p in [
            &mut cfg.corpus,
            &mut cfg.blacklists.direct,
            &mut cfg.blacklists.indirect,
            &mut cfg.blacklists.conf,
            &mut cfg.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SaniError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.finetune_epochs == 0 {
            return Err(SaniError::Config("finetune_epochs must be positive".into()));
        }
        if let Some(&e) = self
            .measure_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.finetune_epochs)
        {
            return Err(SaniError::Config(format!(
                "measurement epoch {e} outside [1, {}]",
                self.finetune_epochs
            )));
        }
        if self.seeds.is_empty() {
            return Err(SaniError::Config("at least one seed is required".into()));
        }
        self.schedule.validate()?;
        if let Some(s) = &self.repair_schedule {
            s.validate()?;
        }
        for p in [
            &self.corpus,
            &self.blacklists.direct,
            &self.blacklists.indirect,
            &self.blacklists.conf,
        ] {
            if !p.is_file() {
                return Err(SaniError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Epochs at which fine-tuning is measured and checkpointed: 0, the
    /// configured ones and the last one.
    pub fn measurement_points(&self) -> Vec<usize> {
        let mut v = vec![0, self.finetune_epochs];
        v.extend(&self.measure_epochs);
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn finetune_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            total_epochs: self.finetune_epochs,
            ..self.schedule.clone()
        }
    }

    pub fn repair_schedule(&self) -> TrainSchedule {
        self.repair_schedule.clone().unwrap_or_else(|| self.schedule.clone())
    }
}
