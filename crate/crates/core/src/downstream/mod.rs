//! Downstream sequence classification on top of an MLM encoder.

mod classifier;
mod task;

pub use classifier::{
    evaluate_f1, macro_f1, train_classifier, warmup_lr, Classifier, ClassifierConfig, CLS_BIAS,
    CLS_WEIGHT,
};
pub use task::{
    build_marker_task, choose_markers, read_labeled_jsonl, write_labeled_jsonl, LabeledExample,
    LabeledRecord, MarkerTask,
};
