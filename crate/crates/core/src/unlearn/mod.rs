//! Erase-and-repair sanitization and its baselines.

mod erase;
mod repair;

pub use erase::{
    ceil_count, erase_last_layer, erase_pruning, floor_count, prunable_layers, ErasureKind,
    ErasureReport, LayerErasure,
};
pub use repair::{
    erase, repair, repair_observed, sanitize, Sanitized, Strategy, UnlearnBudget, PRUNE_PROTECT_FRACTION,
    PRUNE_RESET_FRACTION, SANI_ERASE_FRACTION,
};
