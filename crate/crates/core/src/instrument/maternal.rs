//! Maternal simulated eligibility: the share of women in a race-ethnicity
//! group, drawn from other states, who would qualify for pregnancy-related
//! coverage under the target state's rules. Cells carry age 0 and are used
//! in place of the child table for infants.

use std::collections::{BTreeMap, BTreeSet};

use super::table::{compute_sim_table, CellKey, DonorBlock, DonorSample, SimCell, SimTable};
use super::{InstrumentError, Variant};
use crate::policy_rules::{afdc_financial_tests, DEFAULT_MONTHS_WORKED, FamilyView, PovertyGuidelineTable, RuleSet, RuleVintage};
use crate::units::{Cents, StateId};

pub const REPRODUCTIVE_MIN_AGE: u32 = 15;
pub const REPRODUCTIVE_MAX_AGE: u32 = 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaternalMode {
    AllWomen15to44,
    MothersOfInfants,
}

impl MaternalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaternalMode::AllWomen15to44 => "all_women_15_44",
            MaternalMode::MothersOfInfants => "mothers_of_infants",
        }
    }
}

impl std::str::FromStr for MaternalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all_women_15_44" => Ok(MaternalMode::AllWomen15to44),
            "mothers_of_infants" => Ok(MaternalMode::MothersOfInfants),
            other => Err(format!("unknown maternal mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WomanRecord {
    pub person_id: u64,
    pub state: StateId,
    pub year: i32,
    pub race: String,
    pub age: u32,
    /// Her family as it stands, without the expected child.
    pub view: FamilyView,
    pub weight: f64,
    /// Has a child of age zero.
    pub infant_mother: bool,
}

impl WomanRecord {
    pub fn in_mode(&self, mode: MaternalMode) -> bool {
        match mode {
            MaternalMode::AllWomen15to44 => (REPRODUCTIVE_MIN_AGE..=REPRODUCTIVE_MAX_AGE).contains(&self.age),
            MaternalMode::MothersOfInfants => self.infant_mother,
        }
    }
}

/// Whether a pregnant woman with family `view` qualifies under `vintage`.
/// The expected child counts toward family size. She qualifies through the
/// pregnancy income limit, or through the cash-assistance financial tests
/// (the frozen ones after welfare reform) when single or when the family's
/// primary earner is unemployed by the hours rule.
pub fn woman_eligible(vintage: &RuleVintage, fpl: &PovertyGuidelineTable, view: &FamilyView) -> Result<bool, InstrumentError> {
    let size = view.family_size + 1;
    if let Some(limit) = vintage.pregnancy_limit {
        let guideline = fpl.lookup(vintage.year, vintage.region, size)?;
        let deduction = Cents(12 * vintage.afdc.work_expense_deduction.0 * view.workers as i64);
        if limit.amount_below(view.annual_income - deduction, guideline) {
            return Ok(true);
        }
    }
    let structure = !view.married || view.hours_unemployed();
    if !structure {
        return Ok(false);
    }
    let params = if vintage.post_prwora {
        match &vintage.frozen_1931 {
            Some(p) => p,
            None => return Ok(false),
        }
    } else {
        &vintage.afdc
    };
    Ok(afdc_financial_tests(view.monthly_income(), size, DEFAULT_MONTHS_WORKED, params)?.overall())
}

/// Leave-one-out table keyed by (state, year, age 0, race). Every race
/// present among the year's women gets a cell for each target, undefined
/// when no qualifying donor remains.
pub fn maternal_sim_eligibility(
    women: &[WomanRecord],
    mode: MaternalMode,
    targets: &[(StateId, i32)],
    rules: &RuleSet,
) -> Result<SimTable, InstrumentError> {
    let donors: Vec<&WomanRecord> = women.iter().filter(|w| w.in_mode(mode)).collect();
    let sample = DonorSample {
        blocks: donors
            .iter()
            .map(|w| DonorBlock { state: w.state.clone(), year: w.year, group: w.race.clone(), ages: vec![0], weights: vec![w.weight] })
            .collect(),
    };
    let mut table = compute_sim_table(&sample, targets, true, Variant::Annual, |i, state, out| {
        let w = donors[i];
        let vintage = rules.vintage(state, w.year)?;
        out[0] = if woman_eligible(vintage, &rules.guidelines, &w.view)? { 1.0 } else { 0.0 };
        Ok(())
    })?;
    let mut races: BTreeMap<i32, BTreeSet<&str>> = BTreeMap::new();
    for w in women {
        races.entry(w.year).or_default().insert(&w.race);
    }
    for (state, year) in targets {
        for race in races.get(year).into_iter().flatten() {
            let key = CellKey { state: state.clone(), year: *year, age: 0, group: race.to_string() };
            table.cells.entry(key).or_insert(SimCell { value: None, donor_weight: 0.0, donors: 0 });
        }
    }
    Ok(table)
}
