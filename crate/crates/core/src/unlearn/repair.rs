use serde::{Deserialize, Serialize};

use super::erase::{erase_last_layer, erase_pruning, ErasureReport};
use crate::error::{Result, SaniError};
use crate::metrics::{Evaluator, Measurement, Phase};
use crate::model::ModelParams;
use crate::ndtensor::AdamState;
use crate::objectives::{train_epoch, Scheme, TrainSchedule, TrainingSet};

pub const SANI_ERASE_FRACTION: f64 = 0.5;
pub const PRUNE_PROTECT_FRACTION: f64 = 0.01;
pub const PRUNE_RESET_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Sani,
    Pruning,
    RepairOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Sani, Strategy::Pruning, Strategy::RepairOnly];

    /// Lower-case name used in run ids and on the command line.
    pub fn slug(self) -> &'static str {
        match self {
            Strategy::Sani => "sani",
            Strategy::Pruning => "pruning",
            Strategy::RepairOnly => "repair-only",
        }
    }
}

/// Repair may cost at most `budget_fraction` of the fine-tuning epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnlearnBudget {
    pub finetune_epochs: usize,
    pub budget_fraction: f64,
}

impl UnlearnBudget {
    pub fn new(finetune_epochs: usize) -> Self {
        Self {
            finetune_epochs,
            budget_fraction: 0.20,
        }
    }

    pub fn repair_epochs(&self) -> usize {
        super::erase::ceil_count(self.budget_fraction, self.finetune_epochs).max(1)
    }
}

/// Privacy-preserving fine-tuning on the training set for the whole repair
/// budget, with fresh optimizer state and the learning rate restarted and
/// decayed over the repair window. `observe` sees the model after every
/// epoch along with its absolute epoch number.
#[allow(clippy::too_many_arguments)]
pub fn repair_observed<F>(
    params: &mut ModelParams,
    set: &TrainingSet,
    budget: &UnlearnBudget,
    scheme: Scheme,
    schedule: &TrainSchedule,
    seed: u64,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, &ModelParams) -> Result<()>,
{
    if !scheme.is_private() {
        return Err(SaniError::Config(format!("repair needs a privacy-preserving scheme, got {scheme}")));
    }
    scheme.check(params.config.variant)?;
    let epochs = budget.repair_epochs();
    let schedule = TrainSchedule {
        total_epochs: epochs,
        ..schedule.clone()
    };
    let mut opt = AdamState::new(&params.store);
    for e in 0..epochs {
        let stats = train_epoch(params, &mut opt, set, scheme, &schedule, e, seed)?;
        log::info!("repair epoch {}/{epochs}: loss {:.4}", e + 1, stats.loss);
        observe(budget.finetune_epochs + e + 1, params)?;
    }
    Ok(())
}

/// [`repair_observed`] measuring after every epoch when an evaluator is
/// given.
#[allow(clippy::too_many_arguments)]
pub fn repair(
    params: &mut ModelParams,
    set: &TrainingSet,
    budget: &UnlearnBudget,
    scheme: Scheme,
    schedule: &TrainSchedule,
    seed: u64,
    evaluator: Option<(&Evaluator<'_>, &str)>,
) -> Result<Vec<Measurement>> {
    let mut out = Vec::with_capacity(budget.repair_epochs());
    repair_observed(params, set, budget, scheme, schedule, seed, |epoch, p| {
        if let Some((ev, run)) = evaluator {
            out.push(ev.measure(p, run, epoch, Phase::Repair)?);
        }
        Ok(())
    })?;
    Ok(out)
}

/// Erasure step of `strategy`; REPAIR_ONLY leaves the model untouched.
pub fn erase(params: &mut ModelParams, strategy: Strategy, seed: u64) -> Result<ErasureReport> {
    match strategy {
        Strategy::Sani => erase_last_layer(params, SANI_ERASE_FRACTION, seed),
        Strategy::Pruning => erase_pruning(params, PRUNE_PROTECT_FRACTION, PRUNE_RESET_FRACTION, seed),
        Strategy::RepairOnly => Ok(ErasureReport::none(seed)),
    }
}

#[derive(Debug, Clone)]
pub struct Sanitized {
    pub params: ModelParams,
    pub report: ErasureReport,
    /// Post-erasure measurement followed by one per repair epoch.
    pub measurements: Vec<Measurement>,
}

/// Erase (per `strategy`) then repair. The first measurement is taken right
/// after erasure at epoch `finetune_epochs`.
#[allow(clippy::too_many_arguments)]
pub fn sanitize(
    params: &ModelParams,
    set: &TrainingSet,
    strategy: Strategy,
    budget: &UnlearnBudget,
    scheme: Scheme,
    schedule: &TrainSchedule,
    seed: u64,
    evaluator: &Evaluator<'_>,
    run: &str,
) -> Result<Sanitized> {
    scheme.check(params.config.variant)?;
    let mut params = params.clone();
    let report = erase(&mut params, strategy, seed)?;
    let mut measurements =
        vec![evaluator.measure(&params, run, budget.finetune_epochs, Phase::Erase)?];
    measurements.extend(repair(
        &mut params,
        set,
        budget,
        scheme,
        schedule,
        seed,
        Some((evaluator, run)),
    )?);
    Ok(Sanitized {
        params,
        report,
        measurements,
    })
}
