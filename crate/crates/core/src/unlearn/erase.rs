use serde::{Deserialize, Serialize};

use crate::error::{Result, SaniError};
use crate::model::{ModelParams, POS_EMB, TOK_EMB};
use crate::seeding::{rng_for, stream};

/// Erasure applied before repair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ErasureKind {
    Sani,
    Pruning,
    None,
}

/// Units zeroed in one weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerErasure {
    pub weight: String,
    pub bias: String,
    pub units: usize,
    pub protected: usize,
    pub zeroed: usize,
    /// Zeroed row indices, ascending.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErasureReport {
    pub strategy: ErasureKind,
    pub affected: Vec<String>,
    pub layers: Vec<LayerErasure>,
    pub seed: u64,
}

impl ErasureReport {
    pub fn none(seed: u64) -> Self {
        Self {
            strategy: ErasureKind::None,
            affected: vec![],
            layers: vec![],
            seed,
        }
    }

    pub fn total_zeroed(&self) -> usize {
        self.layers.iter().map(|l| l.zeroed).sum()
    }
}

// Guards against products such as 0.07 * 100 = 7.000000000000001.
const ROUNDING_SLACK: f64 = 1e-9;

pub fn ceil_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - ROUNDING_SLACK).ceil().max(0.0) as usize).min(n)
}

pub fn floor_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + ROUNDING_SLACK).floor().max(0.0) as usize).min(n)
}

fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(SaniError::FractionOutOfRange(f));
    }
    Ok(())
}

fn zero_rows(params: &mut ModelParams, w: usize, b: usize, rows: &[usize]) {
    for &r in rows {
        params.store.get_mut(w).row_mut(r).fill(0.0);
        params.store.get_mut(b).data_mut()[r] = 0.0;
    }
}

/// Zeroes `ceil(fraction * vocab_size)` output units of the head, chosen
/// uniformly without replacement. A unit is a weight row plus its bias
/// entry; nothing else changes.
pub fn erase_last_layer(params: &mut ModelParams, fraction: f64, seed: u64) -> Result<ErasureReport> {
    check_fraction(fraction)?;
    let (w, b) = params.head();
    let units = params.store.get(w).rows();
    let k = ceil_count(fraction, units);
    let mut rng = rng_for(&[seed, stream::ERASURE]);
    let mut rows = rand::seq::index::sample(&mut rng, units, k).into_vec();
    rows.sort_unstable();
    zero_rows(params, w, b, &rows);
    let layer = LayerErasure {
        weight: params.store.name(w).to_string(),
        bias: params.store.name(b).to_string(),
        units,
        protected: 0,
        zeroed: k,
        rows,
    };
    Ok(ErasureReport {
        strategy: ErasureKind::Sani,
        affected: if k > 0 { vec![layer.weight.clone(), layer.bias.clone()] } else { vec![] },
        layers: vec![layer],
        seed,
    })
}

/// Weight matrices subject to pruning, with their biases: every 2-D weight
/// except the embedding tables.
pub fn prunable_layers(params: &ModelParams) -> Vec<(usize, usize)> {
    let store = &params.store;
    (0..store.len())
        .filter(|&i| i != TOK_EMB && i != POS_EMB && store.get(i).rank() == 2)
        .filter_map(|i| {
            let bias = store.name(i).strip_suffix(".weight")?.to_string() + ".bias";
            Some((i, store.index_of(&bias)?))
        })
        .collect()
}

/// Magnitude-pruning baseline. In every prunable matrix the units (rows)
/// are ranked by the L2 norm of their weights; the top
/// `ceil(protect_fraction * units)` are kept and `floor(reset_fraction *
/// remainder)` of the rest are zeroed at random, weights and bias.
pub fn erase_pruning(
    params: &mut ModelParams,
    protect_fraction: f64,
    reset_fraction: f64,
    seed: u64,
) -> Result<ErasureReport> {
    check_fraction(protect_fraction)?;
    check_fraction(reset_fraction)?;
    let mut layers = Vec::new();
    for (li, (w, b)) in prunable_layers(params).into_iter().enumerate() {
        let t = params.store.get(w);
        let units = t.rows();
        let norms: Vec<f64> = (0..units)
            .map(|r| t.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let mut order: Vec<usize> = (0..units).collect();
        order.sort_by(|&a, &c| norms[c].total_cmp(&norms[a]).then(a.cmp(&c)));
        let protected = ceil_count(protect_fraction, units);
        let mut rest = order[protected..].to_vec();
        rest.sort_unstable();
        let k = floor_count(reset_fraction, rest.len());
        let mut rng = rng_for(&[seed, stream::ERASURE, li as u64]);
        let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, rest.len(), k)
            .into_iter()
            .map(|i| rest[i])
            .collect();
        rows.sort_unstable();
        zero_rows(params, w, b, &rows);
        layers.push(LayerErasure {
            weight: params.store.name(w).to_string(),
            bias: params.store.name(b).to_string(),
            units,
            protected,
            zeroed: k,
            rows,
        });
    }
    let affected = layers
        .iter()
        .filter(|l| l.zeroed > 0)
        .flat_map(|l| [l.weight.clone(), l.bias.clone()])
        .collect();
    Ok(ErasureReport {
        strategy: ErasureKind::Pruning,
        affected,
        layers,
        seed,
    })
}
