//! Nuclear-family linkage.
//!
//! Within a household, spouses are paired first; every person named as a
//! `parent_id`, together with their spouse, forms a parent unit. A unit's
//! children are the persons pointing into it who do not head a unit of
//! their own. A unit becomes an analysis family when it has a mother aged
//! 20 to 64 and at least one child aged 0 to 18. Everyone else is written
//! to the drop ledger, so each input person is accounted for exactly once.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::record::{MaritalStatus, PersonRecord, Relationship, Sex};
use super::PopulationError;
use crate::policy_rules::{ChildView, FamilyView};
use crate::units::{Cents, StateId};

pub const MOTHER_MIN_AGE: u32 = 20;
pub const MOTHER_MAX_AGE: u32 = 64;
pub const CHILD_MAX_AGE: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    /// Child whose parent pointer is missing or leaves the household.
    Orphan,
    /// Child of a unit, older than 18, not heading a unit.
    AdultChild,
    /// Single person or couple without linked children aged 0 to 18.
    NoChildren,
    /// Parent unit without a female parent.
    NoMother,
    /// Mother outside the 20 to 64 age range.
    MotherAge,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Orphan => "orphan",
            DropReason::AdultChild => "adult_child",
            DropReason::NoChildren => "no_children",
            DropReason::NoMother => "no_mother",
            DropReason::MotherAge => "mother_age",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropEntry {
    pub household_id: u64,
    pub person_ids: Vec<u64>,
    pub reason: DropReason,
}

/// A mother, her spouse if present, and her children aged 0 to 18. Persons
/// are indices into the record slice the family was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NuclearFamily {
    /// The mother's person id.
    pub family_id: u64,
    pub household_id: u64,
    pub state: StateId,
    pub year: i32,
    pub mother: usize,
    pub spouse: Option<usize>,
    /// Ordered by person id.
    pub children: Vec<usize>,
    /// Parental income from every source except public assistance.
    pub family_income: Cents,
    pub family_size: u32,
    pub marital_status: MaritalStatus,
    pub workers: u32,
    pub primary_earner_monthly_hours: u32,
    pub max_annual_hours: u32,
}

impl NuclearFamily {
    pub fn married(&self) -> bool {
        self.marital_status == MaritalStatus::Married
    }

    pub fn view(&self) -> FamilyView {
        FamilyView {
            married: self.married(),
            family_size: self.family_size,
            annual_income: self.family_income,
            workers: self.workers,
            primary_earner_monthly_hours: self.primary_earner_monthly_hours,
            max_annual_hours: self.max_annual_hours,
        }
    }

    pub fn child_view(&self, records: &[PersonRecord], child: usize, birth_month: u8) -> ChildView {
        let r = &records[child];
        ChildView {
            id: r.person_id,
            birth: r.birth(birth_month),
            head_or_spouse: matches!(r.relationship, Relationship::Head | Relationship::Spouse),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FamilyBuild {
    pub families: Vec<NuclearFamily>,
    pub ledger: Vec<DropEntry>,
}

impl FamilyBuild {
    pub fn dropped_persons(&self) -> usize {
        self.ledger.iter().map(|e| e.person_ids.len()).sum()
    }

    pub fn write_ledger(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "household_id,reason,person_ids")?;
        for e in &self.ledger {
            let ids: Vec<String> = e.person_ids.iter().map(u64::to_string).collect();
            writeln!(out, "{},{},{}", e.household_id, e.reason, ids.join("|"))?;
        }
        out.flush()
    }
}

pub(crate) fn link_household(records: &[PersonRecord], members: &[usize]) -> Result<(Vec<NuclearFamily>, Vec<DropEntry>), PopulationError> {
    let household = records[members[0]].household_id;
    let by_id: HashMap<u64, usize> = members.iter().map(|&i| (records[i].person_id, i)).collect();

    for &i in members {
        let r = &records[i];
        if let Some(s) = r.spouse_id {
            let back = by_id.get(&s).and_then(|&j| records[j].spouse_id);
            if back != Some(r.person_id) {
                return Err(PopulationError::InconsistentSpouse { household, person: r.person_id });
            }
        }
    }
    for &i in members {
        let mut seen = HashSet::new();
        let mut cur = i;
        while let Some(p) = records[cur].parent_id {
            if !seen.insert(cur) {
                return Err(PopulationError::CyclicRelationship { household, person: records[i].person_id });
            }
            match by_id.get(&p) {
                Some(&j) => cur = j,
                None => break,
            }
        }
        let r = &records[i];
        if r.parent_id.is_some() && r.parent_id == r.spouse_id {
            return Err(PopulationError::CyclicRelationship { household, person: r.person_id });
        }
    }

    let unit_key = |i: usize| -> u64 {
        let r = &records[i];
        r.spouse_id.map_or(r.person_id, |s| s.min(r.person_id))
    };
    let mut is_parent: HashSet<u64> = HashSet::new();
    for &i in members {
        if let Some(&p) = records[i].parent_id.as_ref().and_then(|p| by_id.get(p)) {
            is_parent.insert(unit_key(p));
        }
    }
    let heads_unit = |i: usize| records[i].spouse_id.is_some() || is_parent.contains(&unit_key(i));

    let mut units: BTreeMap<u64, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    let mut ledger = Vec::new();
    for &i in members {
        let r = &records[i];
        if heads_unit(i) {
            units.entry(unit_key(i)).or_default().0.push(i);
            continue;
        }
        match r.parent_id.and_then(|p| by_id.get(&p)) {
            Some(&p) if r.age <= CHILD_MAX_AGE => units.entry(unit_key(p)).or_default().1.push(i),
            Some(_) => ledger.push(DropEntry { household_id: household, person_ids: vec![r.person_id], reason: DropReason::AdultChild }),
            None if r.parent_id.is_some() || (r.relationship == Relationship::Child && r.age <= CHILD_MAX_AGE) => {
                ledger.push(DropEntry { household_id: household, person_ids: vec![r.person_id], reason: DropReason::Orphan })
            }
            None => units.entry(unit_key(i)).or_default().0.push(i),
        }
    }

    let mut families = Vec::new();
    for (_, (mut parents, mut children)) in units {
        parents.sort_by_key(|&i| records[i].person_id);
        children.sort_by_key(|&i| records[i].person_id);
        let mother = parents.iter().copied().find(|&i| records[i].sex == Sex::Female);
        let reason = match mother {
            _ if children.is_empty() => Some(DropReason::NoChildren),
            None => Some(DropReason::NoMother),
            Some(m) if !(MOTHER_MIN_AGE..=MOTHER_MAX_AGE).contains(&records[m].age) => Some(DropReason::MotherAge),
            Some(_) => None,
        };
        if let Some(reason) = reason {
            let person_ids = parents.iter().chain(&children).map(|&i| records[i].person_id).collect();
            ledger.push(DropEntry { household_id: household, person_ids, reason });
            continue;
        }
        let mother = mother.expect("checked above");
        let spouse = parents.iter().copied().find(|&i| i != mother);
        let parent_recs: Vec<&PersonRecord> = parents.iter().map(|&i| &records[i]).collect();
        let earnings = |r: &PersonRecord| r.earned_income + r.self_employment_income;
        let primary = parent_recs.iter().copied().fold(&records[mother], |best, r| if earnings(r) > earnings(best) { r } else { best });
        let m = &records[mother];
        families.push(NuclearFamily {
            family_id: m.person_id,
            household_id: household,
            state: m.state.clone(),
            year: m.year,
            mother,
            spouse,
            family_size: (parents.len() + children.len()) as u32,
            children,
            family_income: parent_recs.iter().map(|r| r.income_ex_welfare()).sum(),
            marital_status: if spouse.is_some() { MaritalStatus::Married } else { MaritalStatus::Single },
            workers: parent_recs.iter().filter(|r| r.weeks_worked > 0).count() as u32,
            primary_earner_monthly_hours: primary.max_monthly_hours,
            max_annual_hours: parent_recs.iter().map(|r| r.annual_hours()).max().unwrap_or(0),
        });
    }
    ledger.sort_by_key(|e| e.person_ids[0]);
    Ok((families, ledger))
}

/// Links persons into nuclear families household by household.
pub fn build_nuclear_families(records: &[PersonRecord]) -> Result<FamilyBuild, PopulationError> {
    let mut ids = HashSet::with_capacity(records.len());
    for r in records {
        if !ids.insert(r.person_id) {
            return Err(PopulationError::DuplicateId(r.person_id));
        }
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].household_id, records[i].person_id));
    let households: Vec<&[usize]> = order.chunk_by(|&a, &b| records[a].household_id == records[b].household_id).collect();
    let parts = households
        .par_iter()
        .map(|members| link_household(records, members))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = FamilyBuild::default();
    for (f, l) in parts {
        out.families.extend(f);
        out.ledger.extend(l);
    }
    Ok(out)
}
