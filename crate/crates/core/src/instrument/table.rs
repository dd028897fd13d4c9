use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use super::{InstrumentError, Variant};
use crate::policy_rules::{ChildView, Evaluator, FamilyView, ReferencePeriod, RuleSet};
use crate::units::StateId;

pub const MAX_CHILD_AGE: u32 = 18;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub state: StateId,
    pub year: i32,
    pub age: u32,
    pub group: String,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(state {}, year {}, age {}, group {})", self.state, self.year, self.age, self.group)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimCell {
    /// `None` when no donor outside the target state matches the cell.
    pub value: Option<f64>,
    pub donor_weight: f64,
    pub donors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTable {
    pub variant: Variant,
    pub leave_one_out: bool,
    pub cells: BTreeMap<CellKey, SimCell>,
}

impl SimTable {
    pub fn value(&self, key: &CellKey) -> Result<f64, InstrumentError> {
        match self.cells.get(key) {
            Some(SimCell { value: Some(v), .. }) => Ok(*v),
            Some(_) => Err(InstrumentError::UndefinedCell(key.clone())),
            None => Err(InstrumentError::MissingCell(key.clone())),
        }
    }

    pub fn lookup(&self, state: &StateId, year: i32, age: u32, group: &str) -> Result<f64, InstrumentError> {
        self.value(&CellKey { state: state.clone(), year, age, group: group.to_string() })
    }

    pub fn undefined_cells(&self) -> impl Iterator<Item = &CellKey> {
        self.cells.iter().filter(|(_, c)| c.value.is_none()).map(|(k, _)| k)
    }
}

/// Donors that are evaluated together: they share a state, a year and a
/// group, typically the children of one family.
#[derive(Debug, Clone, PartialEq)]
pub struct DonorBlock {
    pub state: StateId,
    pub year: i32,
    pub group: String,
    pub ages: Vec<u32>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DonorSample {
    pub blocks: Vec<DonorBlock>,
}

/// Builds the table for `targets`. `eval(block, target_state, out)` writes
/// the eligibility under the target state's rules of every donor in the
/// block, in order, into `out`. Targets are processed in parallel; each
/// cell is accumulated in donor order, so results do not depend on the
/// number of threads.
pub fn compute_sim_table<F>(
    sample: &DonorSample,
    targets: &[(StateId, i32)],
    leave_one_out: bool,
    variant: Variant,
    eval: F,
) -> Result<SimTable, InstrumentError>
where
    F: Fn(usize, &StateId, &mut [f64]) -> Result<(), InstrumentError> + Sync,
{
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    let mut universe: BTreeMap<i32, BTreeSet<(u32, &str)>> = BTreeMap::new();
    for (i, b) in sample.blocks.iter().enumerate() {
        by_year.entry(b.year).or_default().push(i);
        let cells = universe.entry(b.year).or_default();
        for &a in &b.ages {
            cells.insert((a, b.group.as_str()));
        }
    }
    let targets: BTreeSet<&(StateId, i32)> = targets.iter().collect();
    let targets: Vec<&(StateId, i32)> = targets.into_iter().collect();
    let empty = Vec::new();
    let parts = targets
        .par_iter()
        .map(|(state, year)| {
            let mut acc: BTreeMap<(u32, &str), (f64, f64, usize)> = BTreeMap::new();
            if let Some(cells) = universe.get(year) {
                for &c in cells {
                    acc.insert(c, (0.0, 0.0, 0));
                }
            }
            let mut buf = Vec::new();
            for &bi in by_year.get(year).unwrap_or(&empty) {
                let b = &sample.blocks[bi];
                if leave_one_out && &b.state == state {
                    continue;
                }
                buf.clear();
                buf.resize(b.ages.len(), 0.0);
                eval(bi, state, &mut buf)?;
                for ((&age, &w), &e) in b.ages.iter().zip(&b.weights).zip(&buf) {
                    let cell = acc.get_mut(&(age, b.group.as_str())).expect("cell in universe");
                    cell.0 += w * e;
                    cell.1 += w;
                    cell.2 += 1;
                }
            }
            Ok(acc
                .into_iter()
                .map(|((age, group), (swe, sw, n))| {
                    let key = CellKey { state: state.clone(), year: *year, age, group: group.to_string() };
                    let value = (n > 0 && sw > 0.0).then(|| swe / sw);
                    (key, SimCell { value, donor_weight: sw, donors: n })
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, InstrumentError>>()?;
    Ok(SimTable { variant, leave_one_out, cells: parts.into_iter().flatten().collect() })
}

/// One donor child with a known eligibility per target state.
#[derive(Debug, Clone, PartialEq)]
pub struct Donor {
    pub state: StateId,
    pub year: i32,
    pub age: u32,
    pub group: String,
    pub weight: f64,
}

/// Table from individual donors whose eligibility under target state `s`
/// is `e(donor_index, s)`.
pub fn compute_sim_table_from<E>(
    donors: &[Donor],
    targets: &[(StateId, i32)],
    leave_one_out: bool,
    variant: Variant,
    e: E,
) -> Result<SimTable, InstrumentError>
where
    E: Fn(usize, &StateId) -> f64 + Sync,
{
    let sample = DonorSample {
        blocks: donors
            .iter()
            .map(|d| DonorBlock { state: d.state.clone(), year: d.year, group: d.group.clone(), ages: vec![d.age], weights: vec![d.weight] })
            .collect(),
    };
    compute_sim_table(&sample, targets, leave_one_out, variant, |i, s, out| {
        out[0] = e(i, s);
        Ok(())
    })
}

/// A donor family for rules-based tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DonorFamily {
    pub state: StateId,
    pub year: i32,
    pub group: String,
    pub view: FamilyView,
    pub children: Vec<ChildView>,
    /// End-of-year ages, aligned with `children`.
    pub ages: Vec<u32>,
    pub weights: Vec<f64>,
}

/// Re-evaluates every donor family under each target state's rules.
pub fn rules_sim_table(
    families: &[DonorFamily],
    targets: &[(StateId, i32)],
    leave_one_out: bool,
    variant: Variant,
    rules: &RuleSet,
    reference: ReferencePeriod,
) -> Result<SimTable, InstrumentError> {
    let sample = DonorSample {
        blocks: families
            .iter()
            .map(|f| DonorBlock { state: f.state.clone(), year: f.year, group: f.group.clone(), ages: f.ages.clone(), weights: f.weights.clone() })
            .collect(),
    };
    compute_sim_table(&sample, targets, leave_one_out, variant, |bi, state, out| {
        let fam = &families[bi];
        let vintage = rules.vintage(state, fam.year)?;
        let ev = Evaluator::new(vintage, &rules.guidelines, &fam.view)?;
        for (slot, child) in out.iter_mut().zip(&fam.children) {
            *slot = ev.evaluate_year(child, reference)?.measure(reference);
        }
        Ok(())
    })
}

/// Expected number of eligible children: the sum of the family's cells.
pub fn family_simt(ages: &[u32], state: &StateId, year: i32, group: &str, table: &SimTable) -> Result<f64, InstrumentError> {
    let mut total = 0.0;
    for &a in ages {
        if a > MAX_CHILD_AGE {
            return Err(InstrumentError::AgeOutOfRange(a));
        }
        total += table.lookup(state, year, a, group)?;
    }
    Ok(total)
}

/// Count of children at each age 0..=18.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ParentType(pub [u32; 19]);

impl ParentType {
    pub fn from_ages(ages: &[u32]) -> Result<ParentType, InstrumentError> {
        let mut counts = [0u32; 19];
        for &a in ages {
            if a > MAX_CHILD_AGE {
                return Err(InstrumentError::AgeOutOfRange(a));
            }
            counts[a as usize] += 1;
        }
        Ok(ParentType(counts))
    }

    pub fn n_children(&self) -> u32 {
        self.0.iter().sum()
    }
}

/// Family total from the parent type: the sum over ages of cell value times
/// the number of children of that age.
pub fn simt_from_parent_type(pt: &ParentType, state: &StateId, year: i32, group: &str, table: &SimTable) -> Result<f64, InstrumentError> {
    let mut total = 0.0;
    for (a, &n) in pt.0.iter().enumerate() {
        if n > 0 {
            total += table.lookup(state, year, a as u32, group)? * n as f64;
        }
    }
    Ok(total)
}
