use serde::{Deserialize, Serialize};

use super::predict::PredictionTable;
use crate::corpus::{AnnotatedDocument, Blacklist};
use crate::error::{Result, SaniError};

/// Per-term regurgitation counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRow {
    pub term: String,
    pub repetitions: usize,
    pub events: usize,
    /// Regurgitated iterations, at most `repetitions`.
    pub capped: usize,
    /// Terms with out-of-vocabulary words never enter the rates.
    #[serde(skip)]
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TermTable {
    pub rows: Vec<TermRow>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegurgitationCount {
    /// Masked positions predicted as a token of the blacklist.
    pub events: usize,
    pub table: TermTable,
}

/// Counts regurgitation events of `blacklist` terms in `predictions`.
///
/// An occurrence is regurgitated in place when every one of its tokens is
/// predicted correctly within one pass. Every other event is charged to the
/// term owning the predicted token. A term's capped count is its in-place
/// iterations plus the events charged elsewhere, bounded by its repetitions.
pub fn count_regurgitations(
    predictions: &PredictionTable,
    docs: &[AnnotatedDocument],
    blacklist: &Blacklist,
) -> RegurgitationCount {
    let n = blacklist.len();
    let mut in_place = vec![0usize; n];
    let mut events_per_term = vec![0usize; n];
    let mut elsewhere = vec![0usize; n];
    let mut events = 0;
    for (doc, pred) in docs.iter().zip(predictions) {
        let mut claimed = vec![false; doc.num_tokens()];
        for occ in blacklist.occurrences(doc) {
            let range = doc.token_range(occ.start, occ.len);
            let first_pass = pred.pass[range.start];
            let hit = range.clone().all(|t| {
                pred.predicted[t] == Some(doc.token_ids[t]) && pred.pass[t] == first_pass
            });
            if hit && !range.clone().any(|t| claimed[t]) {
                in_place[occ.term] += 1;
                for t in range {
                    claimed[t] = true;
                    events_per_term[occ.term] += 1;
                }
            }
        }
        for (t, p) in pred.predicted.iter().enumerate() {
            let Some(p) = *p else { continue };
            if !blacklist.contains_token(p) {
                continue;
            }
            events += 1;
            if claimed[t] {
                continue;
            }
            if let Some(owner) = blacklist.owner_of(p) {
                elsewhere[owner] += 1;
                events_per_term[owner] += 1;
            }
        }
    }
    let rows = blacklist
        .terms()
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let reps = blacklist.repetitions()[i];
            TermRow {
                term: term.text(),
                repetitions: reps,
                events: events_per_term[i],
                capped: (in_place[i] + elsewhere[i]).min(reps),
                excluded: term.has_unk,
            }
        })
        .collect();
    RegurgitationCount {
        events,
        table: TermTable { rows },
    }
}

/// Capped share of term iterations regurgitated.
pub fn regurgitation_rate(table: &TermTable) -> Result<f64> {
    let (hit, total) = table
        .rows
        .iter()
        .filter(|r| !r.excluded)
        .fold((0, 0), |(h, t), r| (h + r.capped, t + r.repetitions));
    if total == 0 {
        return Err(SaniError::ZeroDenominator);
    }
    Ok(hit as f64 / total as f64)
}

/// 1 minus the regurgitation rate over identifier iterations.
pub fn privacy_metric(table: &TermTable) -> Result<f64> {
    Ok(1.0 - regurgitation_rate(table)?)
}

/// Regurgitation rate over confidential-term iterations.
pub fn regurgitation_metric(table: &TermTable) -> Result<f64> {
    regurgitation_rate(table)
}

impl TermTable {
    /// Rows that enter the rates; excluded terms are not written.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in self.rows.iter().filter(|r| !r.excluded) {
            w.serialize(r).map_err(|e| SaniError::csv("term table", e))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| SaniError::csv("term table", e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<TermRow>, _>>()
            .map_err(|e| SaniError::csv("term table", e))?;
        Ok(Self { rows })
    }
}
