//! Language-modeling objectives (MLM, PPMLM, CLM, PPCLM) and the epoch loop.

mod clm;
mod masking;
mod schedule;
mod train;

pub use clm::{clm_example, clm_targets, clm_targets_privacy};
pub use masking::{
    masked_count, select_masks_excluding, select_masks_privacy, select_masks_standard,
    MaskingPlan, MlmExample, MASK_RATE,
};
pub use schedule::{Scheme, TrainSchedule};
pub use train::{
    doc_token_budget, evaluate_objective, example_gradients, prepare_documents, train_epoch,
    EpochStats, Example, TrainingSet,
};

#[cfg(test)]
mod tests;
