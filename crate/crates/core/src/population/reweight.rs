//! Inverse-probability reweighting after dropping records.
//!
//! Retention is estimated by weight share within cells of state, year and
//! marital status. Survivors are divided by their cell's retention
//! probability, which preserves every cell's weight total.

use std::collections::BTreeMap;

use super::record::{MaritalStatus, PersonRecord};
use crate::units::StateId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub state: StateId,
    pub year: i32,
    pub marital_status: MaritalStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweightResult {
    pub weights: Vec<f64>,
    /// Cells in which every unit of weight was dropped; their original
    /// weights are kept.
    pub flagged_cells: Vec<CellKey>,
    pub dropped: usize,
}

/// Reweights rows given each row's cell, weight and drop flag.
pub fn reweight_cells(cells: &[CellKey], weights: &[f64], dropped: &[bool]) -> ReweightResult {
    assert!(cells.len() == weights.len() && weights.len() == dropped.len());
    let mut totals: BTreeMap<&CellKey, (f64, f64)> = BTreeMap::new();
    for i in 0..cells.len() {
        let t = totals.entry(&cells[i]).or_default();
        t.0 += weights[i];
        if !dropped[i] {
            t.1 += weights[i];
        }
    }
    let mut flagged = Vec::new();
    for (cell, (total, kept)) in &totals {
        if *kept <= 0.0 && *total > 0.0 {
            log::warn!("reweighting cell {} {} {} retains no weight; original weights kept", cell.state, cell.year, cell.marital_status);
            flagged.push((*cell).clone());
        }
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut n_dropped = 0;
    for i in 0..cells.len() {
        let (total, kept) = totals[&cells[i]];
        if kept <= 0.0 {
            out.push(weights[i]);
        } else if dropped[i] {
            n_dropped += 1;
            out.push(0.0);
        } else {
            out.push(weights[i] * (total / kept));
        }
    }
    ReweightResult { weights: out, flagged_cells: flagged, dropped: n_dropped }
}

/// Drops the records selected by `drop` and reweights the rest.
pub fn inverse_probability_reweight(records: &[PersonRecord], drop: impl Fn(&PersonRecord) -> bool) -> ReweightResult {
    let cells: Vec<CellKey> = records
        .iter()
        .map(|r| CellKey { state: r.state.clone(), year: r.year, marital_status: r.marital_status })
        .collect();
    let weights: Vec<f64> = records.iter().map(|r| r.survey_weight).collect();
    let dropped: Vec<bool> = records.iter().map(drop).collect();
    reweight_cells(&cells, &weights, &dropped)
}
