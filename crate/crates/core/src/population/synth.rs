//! Synthetic populations with a planted eligibility effect.
//!
//! Every state draws households from the same national distribution, so
//! state differences in eligibility come from the rules alone. Incomes are
//! lognormal multiples of the one-person poverty guideline for the year.
//! The mother's outcome is
//!
//! ```text
//! baseline + state effect + trend * (year - first_year)
//!          + effect * (eligible months / 12 summed over her children) + noise
//! ```
//!
//! where eligibility uses each child's true birth month, which the
//! generator knows and the imputation stage must draw at random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::link_household;
use super::record::{MaritalStatus, PersonRecord, Population, Relationship, Sex};
use super::PopulationError;
use crate::manifest::derive_seed;
use crate::policy_rules::synth::{base_guideline, state_ids};
use crate::policy_rules::{evaluate_year, ReferencePeriod, RuleSet};
use crate::units::{Cents, StateId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub seed: u64,
    pub n_states: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub households_per_cell: usize,
    pub married_share: f64,
    /// Relative frequencies of 1, 2, 3, ... children.
    pub children_weights: Vec<f64>,
    /// Log of a worker's earnings as a multiple of the one-person guideline.
    pub log_earnings_mean: f64,
    pub log_earnings_sd: f64,
    pub mother_employment_rate: f64,
    pub spouse_employment_rate: f64,
    /// Probability that a parent has non-labour income.
    pub other_income_rate: f64,
    pub outcome: String,
    pub treatment_effect: f64,
    pub baseline: f64,
    pub state_effect_sd: f64,
    pub trend: f64,
    pub noise_sd: f64,
    /// Extra households holding a young mother and infant inside her
    /// parent's household.
    pub subfamily_rate: f64,
    pub childless_couple_rate: f64,
    /// Probability that the mother's outcome is flagged as imputed.
    pub imputed_rate: f64,
    pub races: Vec<String>,
    pub race_weights: Vec<f64>,
    pub reference: ReferencePeriod,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            seed: 1,
            n_states: 20,
            first_year: 1986,
            last_year: 2000,
            households_per_cell: 40,
            married_share: 0.55,
            children_weights: vec![0.40, 0.35, 0.17, 0.08],
            log_earnings_mean: 0.9,
            log_earnings_sd: 0.8,
            mother_employment_rate: 0.65,
            spouse_employment_rate: 0.9,
            other_income_rate: 0.2,
            outcome: "hours_per_week".into(),
            treatment_effect: 1.5,
            baseline: 25.0,
            state_effect_sd: 2.0,
            trend: 0.1,
            noise_sd: 8.0,
            subfamily_rate: 0.02,
            childless_couple_rate: 0.03,
            imputed_rate: 0.0,
            races: vec!["white".into(), "black".into(), "hispanic".into(), "other".into()],
            race_weights: vec![0.6, 0.15, 0.18, 0.07],
            reference: ReferencePeriod::LastYear,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), PopulationError> {
        let fail = |m: &str| Err(PopulationError::Config(m.to_string()));
        if self.n_states == 0 {
            return fail("n_states must be positive");
        }
        if self.first_year > self.last_year {
            return fail("first_year must not exceed last_year");
        }
        if self.children_weights.is_empty() || self.children_weights.iter().any(|w| !(*w >= 0.0)) || self.children_weights.iter().sum::<f64>() <= 0.0 {
            return fail("children_weights must be non-negative with a positive sum");
        }
        if self.races.is_empty() || self.races.len() != self.race_weights.len() {
            return fail("races and race_weights must be non-empty and the same length");
        }
        for (name, p) in [
            ("married_share", self.married_share),
            ("mother_employment_rate", self.mother_employment_rate),
            ("spouse_employment_rate", self.spouse_employment_rate),
            ("other_income_rate", self.other_income_rate),
            ("subfamily_rate", self.subfamily_rate),
            ("childless_couple_rate", self.childless_couple_rate),
            ("imputed_rate", self.imputed_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.log_earnings_sd >= 0.0 && self.noise_sd >= 0.0 && self.state_effect_sd >= 0.0) {
            return fail("standard deviations must be non-negative");
        }
        Ok(())
    }
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Draft {
    records: Vec<PersonRecord>,
    /// True birth month per record (children only matter).
    months: Vec<u8>,
}

fn blank(state: &StateId, year: i32, age: u32, sex: Sex, relationship: Relationship, race: &str, weight: f64, n_outcomes: usize) -> PersonRecord {
    PersonRecord {
        person_id: 0,
        household_id: 0,
        state: state.clone(),
        year,
        age,
        sex,
        marital_status: MaritalStatus::Single,
        prior_marital_status: None,
        relationship,
        spouse_id: None,
        parent_id: None,
        race_ethnicity: race.to_string(),
        earned_income: Cents::ZERO,
        self_employment_income: Cents::ZERO,
        other_income: Cents::ZERO,
        public_assistance: Cents::ZERO,
        weeks_worked: 0,
        usual_hours: 0,
        hours_last_week: 0,
        in_labor_force: false,
        max_monthly_hours: 0,
        imputed: Vec::new(),
        survey_weight: weight,
        outcomes: vec![f64::NAN; n_outcomes],
    }
}

struct CellGen<'a> {
    cfg: &'a DgpConfig,
    state: &'a StateId,
    year: i32,
    guideline: f64,
    earnings: Normal<f64>,
    rng: ChaCha8Rng,
}

impl CellGen<'_> {
    fn work(&mut self, r: &mut PersonRecord, employment_rate: f64) {
        if self.rng.random_bool(employment_rate) {
            r.weeks_worked = self.rng.random_range(20..=52);
            r.usual_hours = self.rng.random_range(15..=50);
            r.hours_last_week = r.usual_hours;
            r.in_labor_force = true;
            r.max_monthly_hours = (r.usual_hours * 52).div_ceil(12);
            let dollars = self.guideline * self.earnings.sample(&mut self.rng).exp() * r.weeks_worked as f64 / 52.0;
            r.earned_income = Cents::from_dollars_f64(dollars);
        } else {
            r.in_labor_force = self.rng.random_bool(0.3);
        }
        if self.rng.random_bool(self.cfg.other_income_rate) {
            r.other_income = Cents::from_dollars_f64(self.guideline * self.rng.random_range(0.05..0.5));
        }
    }

    /// Records are linked by position; ids are assigned later.
    fn household(&mut self) -> Draft {
        let cfg = self.cfg;
        let race = cfg.races[pick(&mut self.rng, &cfg.race_weights)].clone();
        let weight = self.rng.random_range(800.0..1200.0);
        let n_kids = pick(&mut self.rng, &cfg.children_weights) + 1;
        let oldest = self.rng.random_range(0..=18u32);
        let mut ages: Vec<u32> = (1..n_kids).map(|_| self.rng.random_range(0..=oldest)).collect();
        ages.push(oldest);
        let mother_age = (oldest + self.rng.random_range(18..=32)).clamp(20, 64);
        let married = self.rng.random_bool(cfg.married_share);
        let n_out = 1;

        let mut recs = Vec::new();
        let mut months = Vec::new();
        let mut mother = blank(self.state, self.year, mother_age, Sex::Female, Relationship::Head, &race, weight, n_out);
        self.work(&mut mother, cfg.mother_employment_rate);
        if married {
            mother.marital_status = MaritalStatus::Married;
            mother.spouse_id = Some(1);
        }
        recs.push(mother);
        months.push(self.rng.random_range(1..=12));
        if married {
            let age = (mother_age as i64 + self.rng.random_range(-3..=6)).clamp(18, 90) as u32;
            let mut sp = blank(self.state, self.year, age, Sex::Male, Relationship::Spouse, &race, weight, n_out);
            sp.marital_status = MaritalStatus::Married;
            sp.spouse_id = Some(0);
            self.work(&mut sp, cfg.spouse_employment_rate);
            recs.push(sp);
            months.push(self.rng.random_range(1..=12));
        }
        for age in ages {
            let mut c = blank(self.state, self.year, age, if self.rng.random_bool(0.5) { Sex::Female } else { Sex::Male }, Relationship::Child, &race, weight, n_out);
            c.parent_id = Some(0);
            recs.push(c);
            months.push(self.rng.random_range(1..=12));
        }
        if cfg.imputed_rate > 0.0 && self.rng.random_bool(cfg.imputed_rate) {
            recs[0].imputed.push(cfg.outcome.clone());
        }
        Draft { records: recs, months }
    }

    fn subfamily(&mut self) -> Draft {
        let race = self.cfg.races[pick(&mut self.rng, &self.cfg.race_weights)].clone();
        let weight = self.rng.random_range(800.0..1200.0);
        let young = self.rng.random_range(20..=24);
        let mut grand = blank(self.state, self.year, young + self.rng.random_range(20..=30), Sex::Female, Relationship::Head, &race, weight, 1);
        self.work(&mut grand, self.cfg.mother_employment_rate);
        let mut mother = blank(self.state, self.year, young, Sex::Female, Relationship::Child, &race, weight, 1);
        mother.parent_id = Some(0);
        self.work(&mut mother, self.cfg.mother_employment_rate);
        let mut infant = blank(self.state, self.year, self.rng.random_range(0..=2), Sex::Male, Relationship::Other, &race, weight, 1);
        infant.parent_id = Some(1);
        let months = (0..3).map(|_| self.rng.random_range(1..=12)).collect();
        Draft { records: vec![grand, mother, infant], months }
    }

    fn couple(&mut self) -> Draft {
        let race = self.cfg.races[pick(&mut self.rng, &self.cfg.race_weights)].clone();
        let weight = self.rng.random_range(800.0..1200.0);
        let age = self.rng.random_range(20..=60);
        let mut a = blank(self.state, self.year, age, Sex::Female, Relationship::Head, &race, weight, 1);
        let mut b = blank(self.state, self.year, age + 2, Sex::Male, Relationship::Spouse, &race, weight, 1);
        a.marital_status = MaritalStatus::Married;
        b.marital_status = MaritalStatus::Married;
        a.spouse_id = Some(1);
        b.spouse_id = Some(0);
        self.work(&mut a, self.cfg.mother_employment_rate);
        self.work(&mut b, self.cfg.spouse_employment_rate);
        Draft { records: vec![a, b], months: vec![1, 1] }
    }
}

/// Rewrites position-based links into person ids.
fn assign_ids(draft: &mut Draft, household_id: u64, first_person: u64) {
    for r in &mut draft.records {
        r.household_id = household_id;
        r.spouse_id = r.spouse_id.map(|p| first_person + p);
        r.parent_id = r.parent_id.map(|p| first_person + p);
    }
    for (i, r) in draft.records.iter_mut().enumerate() {
        r.person_id = first_person + i as u64;
    }
}

/// Writes the planted outcome onto every mother in the household.
fn plant_outcome(draft: &mut Draft, rules: &RuleSet, cfg: &DgpConfig, shift: f64, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Result<(), PopulationError> {
    // Links are positional until ids are assigned; link on positions.
    let mut local = draft.records.clone();
    for (i, r) in local.iter_mut().enumerate() {
        r.person_id = i as u64;
    }
    let members: Vec<usize> = (0..local.len()).collect();
    let (families, _) = link_household(&local, &members)?;
    for fam in families {
        let vintage = rules.vintage(&fam.state, fam.year)?;
        let view = fam.view();
        let mut eligible = 0.0;
        for &c in &fam.children {
            let child = fam.child_view(&draft.records, c, draft.months[c]);
            let res = evaluate_year(&child, &view, vintage, &rules.guidelines, cfg.reference)?;
            eligible += res.measure(cfg.reference);
        }
        let y = cfg.baseline + shift + cfg.trend * (fam.year - cfg.first_year) as f64 + cfg.treatment_effect * eligible + noise.sample(rng);
        draft.records[fam.mother].outcomes[0] = y;
    }
    Ok(())
}

/// Generates households for every state and year in the config. Cells are
/// drawn independently from seeds derived from `seed`, so the output does
/// not depend on the number of worker threads.
pub fn generate_synthetic_population(cfg: &DgpConfig, rules: &RuleSet, seed: u64) -> Result<Population, PopulationError> {
    cfg.validate()?;
    let states = state_ids(cfg.n_states);
    let mut fx_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gen/state_effects"));
    let fx = Normal::new(0.0, cfg.state_effect_sd).map_err(|e| PopulationError::Config(e.to_string()))?;
    let shifts: Vec<f64> = states.iter().map(|_| fx.sample(&mut fx_rng)).collect();
    let earnings = Normal::new(cfg.log_earnings_mean, cfg.log_earnings_sd).map_err(|e| PopulationError::Config(e.to_string()))?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| PopulationError::Config(e.to_string()))?;

    let cells: Vec<(usize, i32)> = (0..states.len()).flat_map(|s| (cfg.first_year..=cfg.last_year).map(move |y| (s, y))).collect();
    let drafts = cells
        .par_iter()
        .map(|&(s, year)| {
            let state = &states[s];
            let mut g = CellGen {
                cfg,
                state,
                year,
                guideline: base_guideline(year),
                earnings,
                rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("gen/{state}/{year}"))),
            };
            let mut out = Vec::new();
            for _ in 0..cfg.households_per_cell {
                out.push(g.household());
                if g.rng.random_bool(cfg.subfamily_rate) {
                    out.push(g.subfamily());
                }
                if g.rng.random_bool(cfg.childless_couple_rate) {
                    out.push(g.couple());
                }
            }
            let mut outcome_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("gen/outcome/{state}/{year}")));
            for d in &mut out {
                plant_outcome(d, rules, cfg, shifts[s], &mut outcome_rng, &noise)?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<Draft>>, PopulationError>>()?;

    let mut records = Vec::new();
    let mut next_person = 1u64;
    let mut next_household = 1u64;
    for mut d in drafts.into_iter().flatten() {
        assign_ids(&mut d, next_household, next_person);
        next_household += 1;
        next_person += d.records.len() as u64;
        records.extend(d.records);
    }
    Ok(Population { outcome_columns: vec![cfg.outcome.clone()], records })
}

/// Annual state characteristics used by the policy-endogeneity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePanelRow {
    pub state: String,
    pub year: i32,
    pub unemployment: f64,
    pub min_wage: f64,
    pub max_benefit: f64,
    pub eitc: f64,
    /// Highest child income limit as a multiple of the poverty guideline.
    pub max_eligibility_limit: f64,
}

/// Characteristics evolve independently of the rules, so the limits do not
/// respond to them.
pub fn generate_state_panel(rules: &RuleSet, seed: u64) -> Vec<StatePanelRow> {
    let mut out = Vec::new();
    for state in rules.states() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("panel/{state}")));
        let shock = Normal::new(0.0, 0.6).expect("valid sd");
        let mut unemployment: f64 = rng.random_range(4.0..8.0);
        let wage_top_up: f64 = if rng.random_bool(0.3) { rng.random_range(0.25..1.5) } else { 0.0 };
        let eitc_start = rng.random_bool(0.3).then(|| rng.random_range(1987..=2000));
        let eitc_rate = rng.random_range(0.05..0.3);
        for year in rules.years() {
            let Ok(v) = rules.vintage(&state, year) else { continue };
            unemployment = (6.0 + 0.7 * (unemployment - 6.0) + shock.sample(&mut rng)).max(1.0);
            let federal = 3.35 * (1.0 + 0.035 * (year - 1986) as f64);
            out.push(StatePanelRow {
                state: state.to_string(),
                year,
                unemployment,
                min_wage: federal + wage_top_up,
                max_benefit: v.afdc.payment(3).map(|c| c.as_dollars()).unwrap_or(0.0),
                eitc: if eitc_start.is_some_and(|y0| year >= y0) { eitc_rate } else { 0.0 },
                max_eligibility_limit: v.max_child_fpl_multiple().map(|r| r.as_f64()).unwrap_or(0.0),
            });
        }
    }
    out
}
