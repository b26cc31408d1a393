use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum SaniError {
    #[error("corpus contains no words")]
    EmptyCorpus,
    #[error("blacklist contains no terms")]
    EmptyBlacklist,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalarLoss(Vec<usize>),
    #[error("sequence of length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("document is empty")]
    EmptyDocument,
    #[error("every word of the document is blacklisted")]
    NoMaskableTokens,
    #[error("objective {scheme} cannot train a {variant} model")]
    SchemeVariantMismatch { scheme: String, variant: String },
    #[error("fraction {0} is outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("blacklist has no occurrences in the corpus")]
    ZeroDenominator,
    #[error("held-out split is empty")]
    EmptyHeldout,
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error("class {0} has no example in the test set")]
    MissingClass(usize),
    #[error("incomplete runs: {}", .0.join(", "))]
    IncompleteRuns(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl SaniError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SaniError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        SaniError::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        SaniError::Csv {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (configs, files), as opposed
    /// to failures during a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            SaniError::Config(_)
                | SaniError::Json { .. }
                | SaniError::EmptyBlacklist
                | SaniError::EmptyCorpus
                | SaniError::FormatVersionMismatch { .. }
                | SaniError::SchemeVariantMismatch { .. }
                | SaniError::FractionOutOfRange(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SaniError>;
