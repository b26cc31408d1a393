//! Privacy, regurgitation and utility measurements.

mod evaluator;
mod frequency;
mod predict;
mod record;
mod regurgitation;
mod utility;

pub use evaluator::{Evaluator, Measurement};
pub use frequency::{
    average_ranks, decile, events_of, frequency_analysis, spearman, CumulativeRow,
    FrequencyAnalysis, ScatterRow,
};
pub use predict::{
    eval_pass_clm, eval_pass_mlm, masking_units, num_passes, predict_corpus, unit_passes,
    DocPredictions, PredictionTable,
};
pub use record::{
    metrics_from_csv, metrics_to_csv, read_metrics_csv, write_metrics_csv, MetricsRecord, Phase,
    METRICS_HEADER,
};
pub use regurgitation::{
    count_regurgitations, privacy_metric, regurgitation_metric, regurgitation_rate,
    RegurgitationCount, TermRow, TermTable,
};
pub use utility::{utility, utility_clm, utility_mlm};

#[cfg(test)]
mod tests;
