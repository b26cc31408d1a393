use super::predict::predict_corpus;
use super::record::{MetricsRecord, Phase};
use super::regurgitation::{count_regurgitations, privacy_metric, regurgitation_metric, TermTable};
use super::utility::utility;
use crate::corpus::{AnnotatedDocument, Blacklist};
use crate::error::Result;
use crate::model::ModelParams;

/// Everything a measurement point needs: the training documents the model
/// may have memorized, held-out text for utility, and the two blacklists.
#[derive(Debug, Clone, Copy)]
pub struct Evaluator<'a> {
    pub train: &'a [AnnotatedDocument],
    pub heldout: &'a [AnnotatedDocument],
    pub identifiers: &'a Blacklist,
    pub conf: &'a Blacklist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub record: MetricsRecord,
    pub identifier_table: TermTable,
    pub conf_table: TermTable,
}

impl Evaluator<'_> {
    /// Privacy over identifiers, regurgitation over confidential terms, and
    /// the identifier event count, all from one prediction sweep.
    pub fn measure(
        &self,
        params: &ModelParams,
        run: &str,
        epoch: usize,
        phase: Phase,
    ) -> Result<Measurement> {
        let preds = predict_corpus(params, self.train)?;
        let ids = count_regurgitations(&preds, self.train, self.identifiers);
        let conf = count_regurgitations(&preds, self.train, self.conf);
        let record = MetricsRecord {
            run: run.to_string(),
            epoch,
            phase,
            privacy: privacy_metric(&ids.table)?,
            regurgitation: regurgitation_metric(&conf.table)?,
            utility: utility(params, self.heldout)?,
            events: ids.events,
        };
        log::debug!(
            "{run} epoch {epoch} {phase}: privacy {:.4} regurgitation {:.4} utility {:.4} events {}",
            record.privacy,
            record.regurgitation,
            record.utility,
            record.events
        );
        Ok(Measurement {
            record,
            identifier_table: ids.table,
            conf_table: conf.table,
        })
    }
}
