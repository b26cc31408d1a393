use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Curve;
use crate::error::{Result, SaniError};
use crate::model::Variant;
use crate::unlearn::Strategy;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DOWNSTREAM_FILE: &str = "downstream.csv";
pub const ERASURE_FILE: &str = "erasure.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Finetune,
    Sanitize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run: String,
    pub kind: RunKind,
    pub variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve: Option<Curve>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strategy: Option<Strategy>,
    /// Run the sanitized checkpoint came from, and its epoch.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_epoch: Option<usize>,
    pub seed: u64,
    pub config_sha256: String,
    /// Paths relative to the run directory, sorted.
    pub files: Vec<String>,
    pub wall_clock: Vec<PhaseTiming>,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| SaniError::json("manifest", e))?;
        std::fs::write(&path, text + "\n").map_err(|e| SaniError::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| SaniError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| SaniError::json("manifest", e))
    }
}

/// Accumulates wall-clock time per named phase.
#[derive(Debug, Default)]
pub(crate) struct Stopwatch {
    phases: Vec<PhaseTiming>,
}

impl Stopwatch {
    pub(crate) fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = std::time::Instant::now();
        let out = f();
        self.add(phase, t0.elapsed().as_secs_f64());
        out
    }

    pub(crate) fn add(&mut self, phase: &str, dt: f64) {
        match self.phases.iter_mut().find(|p| p.phase == phase) {
            Some(p) => p.seconds += dt,
            None => self.phases.push(PhaseTiming {
                phase: phase.to_string(),
                seconds: dt,
            }),
        }
    }

    pub(crate) fn finish(self) -> Vec<PhaseTiming> {
        self.phases
    }
}
