//! Pathway evaluation.
//!
//! Every function here is pure: outputs depend only on the arguments.
//! Month-independent quantities (the AFDC financial tests and the poverty
//! guideline) are computed once per family and vintage by [`Evaluator`];
//! only the child's age moves from month to month.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::types::{AfdcParams, ExpansionThreshold, PovertyGuidelineTable, RuleSet, RuleVintage, ThresholdSource};
use super::RulesError;
use crate::units::{CalDate, Cents, StateId, YearMonth};

/// Months of work assumed when choosing the earnings disregard.
pub const DEFAULT_MONTHS_WORKED: u32 = 1;
/// Oldest age covered through AFDC structure rules.
pub const AFDC_MAX_AGE: u32 = 17;
/// Oldest age in the analysis sample.
pub const CHILD_MAX_AGE: u32 = 18;
/// Unemployed-parent hours limits (monthly, strict; annual, inclusive).
pub const AFDC_UP_MONTHLY_HOURS_LIMIT: u32 = 100;
pub const AFDC_UP_ANNUAL_HOURS_LIMIT: u32 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Afdc,
    AfdcUp,
    Ribicoff,
    MedicallyNeedy,
    PovertyExpansion,
    Section1931,
    TargetedMedicaid,
    Schip,
}

impl Pathway {
    pub const PRE_PRWORA_ORDER: [Pathway; 5] =
        [Pathway::Afdc, Pathway::AfdcUp, Pathway::Ribicoff, Pathway::MedicallyNeedy, Pathway::PovertyExpansion];
    pub const POST_PRWORA_ORDER: [Pathway; 4] =
        [Pathway::Section1931, Pathway::PovertyExpansion, Pathway::TargetedMedicaid, Pathway::Schip];

    pub fn as_str(self) -> &'static str {
        match self {
            Pathway::Afdc => "afdc",
            Pathway::AfdcUp => "afdc_up",
            Pathway::Ribicoff => "ribicoff",
            Pathway::MedicallyNeedy => "medically_needy",
            Pathway::PovertyExpansion => "poverty_expansion",
            Pathway::Section1931 => "section_1931",
            Pathway::TargetedMedicaid => "targeted_medicaid",
            Pathway::Schip => "schip",
        }
    }

    /// Pathways dispatched for a vintage, in precedence order.
    pub fn dispatch_order(post_prwora: bool) -> &'static [Pathway] {
        if post_prwora {
            &Self::POST_PRWORA_ORDER
        } else {
            &Self::PRE_PRWORA_ORDER
        }
    }
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pathway {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "afdc" => Pathway::Afdc,
            "afdc_up" => Pathway::AfdcUp,
            "ribicoff" => Pathway::Ribicoff,
            "medically_needy" => Pathway::MedicallyNeedy,
            "poverty_expansion" => Pathway::PovertyExpansion,
            "section_1931" => Pathway::Section1931,
            "targeted_medicaid" => Pathway::TargetedMedicaid,
            "schip" => Pathway::Schip,
            other => return Err(format!("unknown pathway {other:?}")),
        })
    }
}

/// What the rules need to know about the child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChildView {
    pub id: u64,
    pub birth: YearMonth,
    /// Child is itself the head or spouse of a (sub)family.
    pub head_or_spouse: bool,
}

impl ChildView {
    pub fn born_after(&self, cutoff: Option<CalDate>) -> bool {
        match cutoff {
            Some(c) => self.birth.first_day() > c,
            None => true,
        }
    }
}

/// What the rules need to know about the child's nuclear family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FamilyView {
    pub married: bool,
    pub family_size: u32,
    /// Parental income from every source except public assistance.
    pub annual_income: Cents,
    pub workers: u32,
    pub primary_earner_monthly_hours: u32,
    pub max_annual_hours: u32,
}

impl FamilyView {
    /// Monthly income used by the AFDC tests (annual amount / 12, floored).
    pub fn monthly_income(&self) -> Cents {
        Cents(self.annual_income.0.div_euclid(12))
    }

    /// Primary earner under 100 hours a month and nobody above 1,200 a year.
    pub fn hours_unemployed(&self) -> bool {
        self.primary_earner_monthly_hours < AFDC_UP_MONTHLY_HOURS_LIMIT && self.max_annual_hours <= AFDC_UP_ANNUAL_HOURS_LIMIT
    }
}

/// Outcome of the three AFDC financial tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AfdcTestOutcome {
    pub countable_income: Cents,
    pub benefit: Cents,
    /// Positive benefit: payment standard exceeds countable income.
    pub benefit_test: bool,
    /// Countable income below the needs standard.
    pub needs_test: bool,
    /// Gross income does not exceed the gross-income limit.
    pub gross_test: bool,
}

impl AfdcTestOutcome {
    pub fn overall(&self) -> bool {
        self.benefit_test && self.needs_test && self.gross_test
    }
}

/// Income after the flat disregard and the first schedule row admissible
/// for `months_worked`.
pub fn countable_income(monthly_income: Cents, months_worked: u32, params: &AfdcParams) -> Cents {
    let after_flat = (monthly_income - params.flat_disregard).max0();
    match params.earnings_disregards.iter().find(|r| months_worked <= r.months_worked_limit) {
        Some(rule) => {
            let after = (after_flat - rule.flat_amount).max0();
            after - rule.fraction.of(after)
        }
        None => after_flat,
    }
}

/// The three AFDC financial tests for a family of `family_size` with
/// `monthly_income` from every source except public assistance.
pub fn afdc_financial_tests(
    monthly_income: Cents,
    family_size: u32,
    months_worked: u32,
    params: &AfdcParams,
) -> Result<AfdcTestOutcome, RulesError> {
    let needs = params.needs(family_size)?;
    let payment = params.payment(family_size)?;
    let countable = countable_income(monthly_income, months_worked, params);
    let raw_benefit = payment - countable;
    let gross_limit_scaled = params.gross_income_limit_pct as i128 * needs.0 as i128;
    Ok(AfdcTestOutcome {
        countable_income: countable,
        benefit: raw_benefit.max0(),
        benefit_test: raw_benefit.0 > 0,
        needs_test: countable < needs,
        gross_test: (monthly_income.0 as i128) * 100 <= gross_limit_scaled,
    })
}

/// Month-independent state for one (family, vintage) pair.
pub struct Evaluator<'a> {
    vintage: &'a RuleVintage,
    family: &'a FamilyView,
    guideline: Cents,
    afdc: Option<AfdcTestOutcome>,
    frozen: Option<AfdcTestOutcome>,
    needs: Option<Cents>,
}

impl<'a> Evaluator<'a> {
    pub fn new(vintage: &'a RuleVintage, fpl: &PovertyGuidelineTable, family: &'a FamilyView) -> Result<Self, RulesError> {
        if family.family_size == 0 {
            return Err(RulesError::InvalidFamilySize(0));
        }
        let guideline = fpl.lookup(vintage.year, vintage.region, family.family_size)?;
        let monthly = family.monthly_income();
        let (afdc, needs) = if vintage.post_prwora {
            (None, None)
        } else {
            (
                Some(afdc_financial_tests(monthly, family.family_size, DEFAULT_MONTHS_WORKED, &vintage.afdc)?),
                Some(vintage.afdc.needs(family.family_size)?),
            )
        };
        let frozen = match (&vintage.frozen_1931, vintage.post_prwora) {
            (Some(p), true) => Some(afdc_financial_tests(monthly, family.family_size, DEFAULT_MONTHS_WORKED, p)?),
            _ => None,
        };
        Ok(Evaluator { vintage, family, guideline, afdc, frozen, needs })
    }

    fn afdc_outcome(&self) -> Result<AfdcTestOutcome, RulesError> {
        match self.afdc {
            Some(o) => Ok(o),
            None => afdc_financial_tests(
                self.family.monthly_income(),
                self.family.family_size,
                DEFAULT_MONTHS_WORKED,
                &self.vintage.afdc,
            ),
        }
    }

    fn flag_error(&self, pathway: Pathway) -> RulesError {
        RulesError::FlagDisabled { pathway, state: self.vintage.state.clone(), year: self.vintage.year }
    }

    /// Whether `pathway` is enabled in the vintage (optional programs only).
    pub fn pathway_enabled(&self, pathway: Pathway) -> bool {
        let f = &self.vintage.flags;
        match pathway {
            Pathway::AfdcUp => f.afdc_up,
            Pathway::Ribicoff => f.ribicoff || self.vintage.ribicoff_mandate.is_some(),
            Pathway::MedicallyNeedy => f.medically_needy,
            Pathway::Schip => f.schip_separate,
            Pathway::TargetedMedicaid => f.targeted_medicaid,
            Pathway::Afdc | Pathway::PovertyExpansion | Pathway::Section1931 => true,
        }
    }

    fn expansion_met(&self, child: &ChildView, age: u32, exp: &ExpansionThreshold, deduction_per_worker: Cents) -> bool {
        if age < exp.min_age || age > exp.max_age || !child.born_after(exp.birthdate_cutoff) {
            return false;
        }
        let deduction = Cents(12 * deduction_per_worker.0 * self.family.workers as i64);
        let net = self.family.annual_income - deduction;
        exp.fpl_multiple.amount_below(net, self.guideline)
    }

    fn any_expansion(&self, child: &ChildView, age: u32, source: ThresholdSource, deduction: Cents) -> bool {
        self.vintage
            .expansions
            .iter()
            .filter(|e| e.source == source)
            .any(|e| self.expansion_met(child, age, e, deduction))
    }

    /// Evaluates one pathway for a child of `age` (completed years in the
    /// determination month).
    pub fn eligible_at_age(&self, pathway: Pathway, child: &ChildView, age: u32) -> Result<bool, RulesError> {
        if !self.pathway_enabled(pathway) {
            return Err(self.flag_error(pathway));
        }
        let fam = self.family;
        let v = self.vintage;
        let dependent = !child.head_or_spouse;
        Ok(match pathway {
            Pathway::Afdc => !fam.married && dependent && age <= AFDC_MAX_AGE && self.afdc_outcome()?.overall(),
            Pathway::AfdcUp => {
                fam.married && dependent && age <= AFDC_MAX_AGE && fam.hours_unemployed() && self.afdc_outcome()?.overall()
            }
            Pathway::Ribicoff => {
                let income_ok = self.afdc_outcome()?.overall();
                let optional = v.flags.ribicoff && fam.married && dependent && age <= CHILD_MAX_AGE && income_ok;
                let mandated = match v.ribicoff_mandate {
                    Some(m) => dependent && age <= m.max_age && child.born_after(m.birthdate_cutoff) && income_ok,
                    None => false,
                };
                optional || mandated
            }
            Pathway::MedicallyNeedy => {
                let limit = v.medically_needy_limit.ok_or_else(|| self.flag_error(pathway))?;
                let needs = match self.needs {
                    Some(n) => n,
                    None => v.afdc.needs(fam.family_size)?,
                };
                !fam.married && dependent && age <= AFDC_MAX_AGE && limit.amount_below(fam.monthly_income(), needs)
            }
            Pathway::PovertyExpansion => {
                self.any_expansion(child, age, ThresholdSource::PovertyExpansion, v.afdc.work_expense_deduction)
            }
            Pathway::TargetedMedicaid => self.any_expansion(child, age, ThresholdSource::Targeted, v.afdc.work_expense_deduction),
            Pathway::Schip => {
                let schip = v.schip.ok_or_else(|| self.flag_error(pathway))?;
                self.any_expansion(child, age, ThresholdSource::Schip, schip.work_expense_deduction)
            }
            Pathway::Section1931 => {
                let frozen = match (self.frozen, &v.frozen_1931) {
                    (Some(o), _) => o,
                    (None, Some(p)) => {
                        afdc_financial_tests(fam.monthly_income(), fam.family_size, DEFAULT_MONTHS_WORKED, p)?
                    }
                    (None, None) => return Err(RulesError::MissingFrozen { state: v.state.clone(), year: v.year }),
                };
                dependent && age <= AFDC_MAX_AGE && frozen.overall() && (!fam.married || fam.hours_unemployed())
            }
        })
    }

    /// First eligible pathway in precedence order, skipping optional
    /// programs the vintage does not run.
    pub fn determine(&self, child: &ChildView, month: YearMonth) -> Result<Option<Pathway>, RulesError> {
        match month.age_since(child.birth) {
            Some(age) => self.determine_at_age(child, age),
            None => Ok(None),
        }
    }

    fn determine_at_age(&self, child: &ChildView, age: u32) -> Result<Option<Pathway>, RulesError> {
        for &p in Pathway::dispatch_order(self.vintage.post_prwora) {
            if !self.pathway_enabled(p) {
                continue;
            }
            if self.eligible_at_age(p, child, age)? {
                return Ok(Some(p));
            }
        }
        Ok(None)
    }

    /// Evaluates the vintage's year for one child. Within a year a child
    /// has at most two ages, so each age is evaluated once.
    pub fn evaluate_year(&self, child: &ChildView, reference: ReferencePeriod) -> Result<EligibilityResult, RulesError> {
        let mut months = [None; 12];
        let range = match reference {
            ReferencePeriod::LastYear => 1..=12u8,
            ReferencePeriod::LastWeek => MARCH..=MARCH,
        };
        let mut cache: [Option<(u32, Option<Pathway>)>; 2] = [None, None];
        for m in range {
            let Some(age) = YearMonth::new(self.vintage.year, m).age_since(child.birth) else { continue };
            let hit = cache.iter().flatten().find(|(a, _)| *a == age).map(|(_, p)| *p);
            let tag = match hit {
                Some(p) => p,
                None => {
                    let p = self.determine_at_age(child, age)?;
                    let slot = if cache[0].is_none() { 0 } else { 1 };
                    cache[slot] = Some((age, p));
                    p
                }
            };
            months[(m - 1) as usize] = tag;
        }
        Ok(EligibilityResult::from_months(child.id, months))
    }
}

pub fn pathway_eligible(
    pathway: Pathway,
    child: &ChildView,
    family: &FamilyView,
    vintage: &RuleVintage,
    fpl: &PovertyGuidelineTable,
    month: YearMonth,
) -> Result<bool, RulesError> {
    let ev = Evaluator::new(vintage, fpl, family)?;
    match month.age_since(child.birth) {
        Some(age) => ev.eligible_at_age(pathway, child, age),
        None => {
            if ev.pathway_enabled(pathway) {
                Ok(false)
            } else {
                Err(ev.flag_error(pathway))
            }
        }
    }
}

pub fn determine_monthly_eligibility(
    child: &ChildView,
    family: &FamilyView,
    vintage: &RuleVintage,
    fpl: &PovertyGuidelineTable,
    month: YearMonth,
) -> Result<Option<Pathway>, RulesError> {
    Evaluator::new(vintage, fpl, family)?.determine(child, month)
}

/// Which months an annual measure is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePeriod {
    /// Average over all twelve months of the year.
    LastYear,
    /// March of the year only.
    LastWeek,
}

impl FromStr for ReferencePeriod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "last_year" => Ok(ReferencePeriod::LastYear),
            "last_week" => Ok(ReferencePeriod::LastWeek),
            other => Err(format!("unknown reference period {other:?}")),
        }
    }
}

pub const MARCH: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityResult {
    pub child_id: u64,
    /// Slot `m - 1` holds the pathway for month `m`; `None` means
    /// ineligible or not evaluated.
    pub months: [Option<Pathway>; 12],
    pub annual_fraction: f64,
    pub march_eligible: bool,
}

impl EligibilityResult {
    pub fn from_months(child_id: u64, months: [Option<Pathway>; 12]) -> EligibilityResult {
        let count = months.iter().filter(|m| m.is_some()).count();
        EligibilityResult {
            child_id,
            months,
            annual_fraction: count as f64 / 12.0,
            march_eligible: months[(MARCH - 1) as usize].is_some(),
        }
    }

    /// The annual measure for `reference`: the eligible share of months,
    /// or March eligibility as 0 or 1.
    pub fn measure(&self, reference: ReferencePeriod) -> f64 {
        match reference {
            ReferencePeriod::LastYear => self.annual_fraction,
            ReferencePeriod::LastWeek => f64::from(u8::from(self.march_eligible)),
        }
    }

    pub fn eligible_months(&self) -> u32 {
        self.months.iter().filter(|m| m.is_some()).count() as u32
    }

    /// Pipe-separated pathway tags, `.` for ineligible months.
    pub fn months_string(&self) -> String {
        self.months
            .iter()
            .map(|m| m.map(|p| p.as_str()).unwrap_or("."))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Evaluates a family under one vintage for the reference period, the
/// shared inner step of [`annualize_eligibility`] and donor re-evaluation.
pub fn evaluate_year(
    child: &ChildView,
    family: &FamilyView,
    vintage: &RuleVintage,
    fpl: &PovertyGuidelineTable,
    reference: ReferencePeriod,
) -> Result<EligibilityResult, RulesError> {
    Evaluator::new(vintage, fpl, family)?.evaluate_year(child, reference)
}

pub fn annualize_eligibility(
    child: &ChildView,
    family: &FamilyView,
    state: &StateId,
    year: i32,
    rules: &RuleSet,
    reference: ReferencePeriod,
) -> Result<EligibilityResult, RulesError> {
    let vintage = rules.vintage(state, year)?;
    evaluate_year(child, family, vintage, &rules.guidelines, reference)
}
