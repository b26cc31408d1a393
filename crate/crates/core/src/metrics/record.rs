use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SaniError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Finetune,
    Erase,
    Repair,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Finetune => "finetune",
            Phase::Erase => "erase",
            Phase::Repair => "repair",
        })
    }
}

/// One measurement point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run: String,
    pub epoch: usize,
    pub phase: Phase,
    pub privacy: f64,
    pub regurgitation: f64,
    pub utility: f64,
    pub events: usize,
}

pub const METRICS_HEADER: &str = "run,epoch,phase,privacy,regurgitation,utility,events";

pub fn metrics_to_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| SaniError::csv("metrics", e))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| SaniError::csv("metrics", e.into_error().into()))?;
    Ok(format!("{METRICS_HEADER}\n{}", String::from_utf8(body).expect("csv output is UTF-8")))
}

pub fn metrics_from_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SaniError::csv("metrics", e))
}

pub fn write_metrics_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    std::fs::write(path, metrics_to_csv(records)?).map_err(|e| SaniError::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| SaniError::io(path, e))?;
    metrics_from_csv(&text)
}
