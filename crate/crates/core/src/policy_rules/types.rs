use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::RulesError;
use crate::units::{CalDate, Cents, Fraction, Ratio, StateId};

/// Highest medically needy income limit, as a multiple of the needs standard.
pub const MEDICALLY_NEEDY_CAP: Ratio = Ratio(13_300);

/// Calendar year from which the post-welfare-reform pathways apply.
pub const FIRST_POST_PRWORA_YEAR: i32 = 1997;

static FAMILY_SIZE_CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn warn_clamp(size: u32, max: usize, table: &str) {
    if !FAMILY_SIZE_CLAMP_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("family size {size} exceeds {table} table maximum {max}; clamping to {max} (further clamps not logged)");
    }
}

/// One row of the earnings-disregard schedule: applies when the parent has
/// worked at most `months_worked_limit` months.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DisregardRule {
    pub months_worked_limit: u32,
    pub flat_amount: Cents,
    pub fraction: Fraction,
}

impl DisregardRule {
    pub fn parse_schedule(s: &str) -> Result<Vec<DisregardRule>, String> {
        let mut rules = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 3 {
                return Err(format!("disregard rule {part:?} must be months:amount:fraction"));
            }
            let months_worked_limit = fields[0].trim().parse().map_err(|_| format!("bad months limit in {part:?}"))?;
            let flat_amount = fields[1].parse::<Cents>().map_err(|e| e.to_string())?;
            let fraction = fields[2].parse::<Fraction>().map_err(|e| e.to_string())?;
            rules.push(DisregardRule { months_worked_limit, flat_amount, fraction });
        }
        Ok(rules)
    }

    pub fn format_schedule(rules: &[DisregardRule]) -> String {
        rules
            .iter()
            .map(|r| format!("{}:{}:{}", r.months_worked_limit, r.flat_amount, r.fraction))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// AFDC financial parameters for one state and year. Monetary amounts are
/// monthly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AfdcParams {
    /// Indexed by family size minus one.
    pub needs_standard: Vec<Cents>,
    pub payment_standard: Vec<Cents>,
    pub gross_income_limit_pct: u32,
    pub flat_disregard: Cents,
    pub earnings_disregards: Vec<DisregardRule>,
    pub work_expense_deduction: Cents,
}

impl AfdcParams {
    pub fn max_family_size(&self) -> usize {
        self.needs_standard.len()
    }

    fn index(&self, family_size: u32) -> Result<usize, RulesError> {
        let max = self.needs_standard.len();
        if family_size == 0 || max == 0 {
            return Err(RulesError::InvalidFamilySize(family_size));
        }
        let size = family_size as usize;
        if size > max {
            warn_clamp(family_size, max, "AFDC standards");
            Ok(max - 1)
        } else {
            Ok(size - 1)
        }
    }

    pub fn needs(&self, family_size: u32) -> Result<Cents, RulesError> {
        Ok(self.needs_standard[self.index(family_size)?])
    }

    pub fn payment(&self, family_size: u32) -> Result<Cents, RulesError> {
        Ok(self.payment_standard[self.index(family_size)?])
    }

    /// The conventional schedule for states without published data:
    /// $90 work expense, then $30 and one third for four months and $30
    /// for the following eight.
    pub fn conventional_disregards() -> (Cents, Vec<DisregardRule>) {
        (
            Cents::from_dollars(90),
            vec![
                DisregardRule { months_worked_limit: 4, flat_amount: Cents::from_dollars(30), fraction: Fraction { num: 1, den: 3 } },
                DisregardRule { months_worked_limit: 12, flat_amount: Cents::from_dollars(30), fraction: Fraction::ZERO },
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    PovertyExpansion,
    Schip,
    Targeted,
}

impl ThresholdSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdSource::PovertyExpansion => "poverty_expansion",
            ThresholdSource::Schip => "schip",
            ThresholdSource::Targeted => "targeted",
        }
    }
}

impl FromStr for ThresholdSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "poverty_expansion" => Ok(ThresholdSource::PovertyExpansion),
            "schip" => Ok(ThresholdSource::Schip),
            "targeted" => Ok(ThresholdSource::Targeted),
            other => Err(format!("unknown threshold source {other:?}")),
        }
    }
}

/// An age- and possibly birthdate-gated income limit expressed as a
/// multiple of the poverty guideline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionThreshold {
    pub min_age: u32,
    pub max_age: u32,
    pub fpl_multiple: Ratio,
    /// Children must be born strictly after this date.
    pub birthdate_cutoff: Option<CalDate>,
    pub source: ThresholdSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProgramFlags {
    pub afdc_up: bool,
    pub ribicoff: bool,
    pub medically_needy: bool,
    pub schip_separate: bool,
    pub targeted_medicaid: bool,
}

/// Federally mandated Ribicoff coverage of young children born after a
/// cutoff whose families meet the AFDC income tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RibicoffMandate {
    pub max_age: u32,
    pub birthdate_cutoff: Option<CalDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchipParams {
    /// Monthly, per worker.
    pub work_expense_deduction: Cents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidelineRegion {
    Contiguous,
    Alaska,
    Hawaii,
}

impl GuidelineRegion {
    pub fn as_str(self) -> &'static str {
        match self {
            GuidelineRegion::Contiguous => "contiguous",
            GuidelineRegion::Alaska => "alaska",
            GuidelineRegion::Hawaii => "hawaii",
        }
    }
}

impl FromStr for GuidelineRegion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "" | "contiguous" => Ok(GuidelineRegion::Contiguous),
            "alaska" => Ok(GuidelineRegion::Alaska),
            "hawaii" => Ok(GuidelineRegion::Hawaii),
            other => Err(format!("unknown guideline region {other:?}")),
        }
    }
}

impl fmt::Display for GuidelineRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every eligibility parameter for one state and year.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleVintage {
    pub state: StateId,
    pub year: i32,
    pub region: GuidelineRegion,
    pub afdc: AfdcParams,
    pub flags: ProgramFlags,
    pub expansions: Vec<ExpansionThreshold>,
    pub schip: Option<SchipParams>,
    /// Multiple of the AFDC needs standard.
    pub medically_needy_limit: Option<Ratio>,
    pub ribicoff_mandate: Option<RibicoffMandate>,
    /// AFDC rules in force in July 1996, used for Section 1931.
    pub frozen_1931: Option<AfdcParams>,
    pub post_prwora: bool,
    /// Income limit for pregnancy-related coverage of women, as a multiple
    /// of the poverty guideline.
    pub pregnancy_limit: Option<Ratio>,
}

impl RuleVintage {
    pub fn key(&self) -> (StateId, i32) {
        (self.state.clone(), self.year)
    }

    /// Highest poverty-guideline multiple across all child thresholds.
    pub fn max_child_fpl_multiple(&self) -> Option<Ratio> {
        self.expansions.iter().map(|e| e.fpl_multiple).max()
    }
}

/// Annual poverty guidelines by year, region and family size.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PovertyGuidelineTable {
    /// Amounts indexed by family size minus one.
    pub amounts: BTreeMap<(i32, GuidelineRegion), Vec<Cents>>,
}

impl PovertyGuidelineTable {
    pub fn lookup(&self, year: i32, region: GuidelineRegion, family_size: u32) -> Result<Cents, RulesError> {
        let row = self
            .amounts
            .get(&(year, region))
            .ok_or(RulesError::MissingGuideline { year, region })?;
        if family_size == 0 || row.is_empty() {
            return Err(RulesError::InvalidFamilySize(family_size));
        }
        let size = family_size as usize;
        if size > row.len() {
            warn_clamp(family_size, row.len(), "poverty guideline");
            Ok(row[row.len() - 1])
        } else {
            Ok(row[size - 1])
        }
    }
}

/// A loaded, validated rule database.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    pub vintages: BTreeMap<(StateId, i32), RuleVintage>,
    pub guidelines: PovertyGuidelineTable,
}

impl RuleSet {
    pub fn vintage(&self, state: &StateId, year: i32) -> Result<&RuleVintage, RulesError> {
        self.vintages
            .get(&(state.clone(), year))
            .ok_or_else(|| RulesError::MissingVintage { state: state.clone(), year })
    }

    pub fn states(&self) -> Vec<StateId> {
        let mut s: Vec<StateId> = self.vintages.keys().map(|(s, _)| s.clone()).collect();
        s.dedup();
        s
    }

    pub fn states_in_year(&self, year: i32) -> Vec<StateId> {
        self.vintages.keys().filter(|(_, y)| *y == year).map(|(s, _)| s.clone()).collect()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut y: Vec<i32> = self.vintages.keys().map(|(_, y)| *y).collect();
        y.sort_unstable();
        y.dedup();
        y
    }
}
