use serde::Serialize;

use super::regurgitation::TermTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub term: String,
    pub repetitions: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeRow {
    pub term: String,
    pub repetitions: usize,
    pub cumulative_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAnalysis {
    pub scatter: Vec<ScatterRow>,
    /// Terms by ascending repetitions, events accumulated along the way.
    pub cumulative: Vec<CumulativeRow>,
    pub spearman: f64,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; 0 when either side has no variance.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn frequency_analysis(table: &TermTable) -> FrequencyAnalysis {
    let rows: Vec<_> = table.rows.iter().filter(|r| !r.excluded).collect();
    let scatter = rows
        .iter()
        .map(|r| ScatterRow {
            term: r.term.clone(),
            repetitions: r.repetitions,
            events: r.events,
        })
        .collect();
    let mut by_reps = rows.clone();
    by_reps.sort_by_key(|r| r.repetitions);
    let mut acc = 0;
    let cumulative = by_reps
        .iter()
        .map(|r| {
            acc += r.events;
            CumulativeRow {
                term: r.term.clone(),
                repetitions: r.repetitions,
                cumulative_events: acc,
            }
        })
        .collect();
    let reps: Vec<f64> = rows.iter().map(|r| r.repetitions as f64).collect();
    let events: Vec<f64> = rows.iter().map(|r| r.events as f64).collect();
    FrequencyAnalysis {
        scatter,
        cumulative,
        spearman: if rows.is_empty() { 0.0 } else { spearman(&reps, &events) },
    }
}

/// Row indices of the most (`top`) or least repeated tenth of the terms,
/// at least one term.
pub fn decile(table: &TermTable, top: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..table.rows.len()).filter(|&i| !table.rows[i].excluded).collect();
    if top {
        idx.sort_by_key(|&i| std::cmp::Reverse(table.rows[i].repetitions));
    } else {
        idx.sort_by_key(|&i| table.rows[i].repetitions);
    }
    idx.truncate(idx.len().div_ceil(10));
    idx
}

/// Total events of the given rows.
pub fn events_of(table: &TermTable, rows: &[usize]) -> usize {
    rows.iter().map(|&i| table.rows[i].events).sum()
}
