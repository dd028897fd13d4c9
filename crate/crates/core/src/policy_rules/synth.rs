//! Synthetic rule databases.
//!
//! The generated parameters follow the shape of the historical rules (the
//! federal expansion calendar, guideline levels that grow with prices,
//! AFDC standards below the poverty line) but every state-level number is
//! drawn at random. Nothing here is a historical value.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::types::*;
use crate::manifest::derive_seed;
use crate::units::{CalDate, Cents, Ratio, StateId};

/// Largest family size in generated guideline tables.
pub const GUIDELINE_MAX_SIZE: usize = 12;
/// Largest family size in generated AFDC tables.
pub const AFDC_MAX_SIZE: usize = 10;
/// Year of the frozen AFDC snapshot used after welfare reform.
pub const FROZEN_YEAR: i32 = 1996;

const ALASKA_FACTOR: f64 = 1.25;
const HAWAII_FACTOR: f64 = 1.15;
const EXTRA_PERSON_SHARE: f64 = 0.345;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthRulesConfig {
    pub n_states: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

/// State ids used by the generators: `ST01`, `ST02`, ...
pub fn state_ids(n: usize) -> Vec<StateId> {
    (1..=n).map(|i| StateId(format!("ST{i:02}"))).collect()
}

fn region_for(index: usize) -> GuidelineRegion {
    match index {
        1 => GuidelineRegion::Alaska,
        10 => GuidelineRegion::Hawaii,
        _ => GuidelineRegion::Contiguous,
    }
}

/// Annual guideline for one person in the contiguous states, in dollars.
pub fn base_guideline(year: i32) -> f64 {
    2970.0 * (12060.0_f64 / 2970.0).powf((year - 1977) as f64 / 40.0)
}

fn round_dollars(x: f64) -> Cents {
    Cents::from_dollars(x.round() as i64)
}

pub fn guideline_row(year: i32, region: GuidelineRegion) -> Vec<Cents> {
    let factor = match region {
        GuidelineRegion::Contiguous => 1.0,
        GuidelineRegion::Alaska => ALASKA_FACTOR,
        GuidelineRegion::Hawaii => HAWAII_FACTOR,
    };
    let g1 = base_guideline(year) * factor;
    (0..GUIDELINE_MAX_SIZE)
        .map(|k| round_dollars(g1 * (1.0 + EXTRA_PERSON_SHARE * k as f64)))
        .collect()
}

/// Year-invariant draws that characterise one state.
struct StateTraits {
    needs_ratio: f64,
    payment_ratio: f64,
    afdc_up_early: bool,
    ribicoff: bool,
    medically_needy: Option<Ratio>,
    obra86_year: Option<i32>,
    infant_185_year: Option<i32>,
    generous_year: Option<i32>,
    generous_multiple: Ratio,
    schip_separate: bool,
    schip_multiple: Ratio,
    targeted: bool,
    targeted_multiple: Ratio,
    pregnancy_multiple: Ratio,
}

fn draw_ratio(rng: &mut ChaCha8Rng, lo: u32, hi: u32, step: u32) -> Ratio {
    let steps = (hi - lo) / step;
    Ratio(lo + step * rng.random_range(0..=steps))
}

fn draw_traits(rng: &mut ChaCha8Rng) -> StateTraits {
    let opt_year = |rng: &mut ChaCha8Rng, p: f64, lo: i32, hi: i32| rng.random_bool(p).then(|| rng.random_range(lo..=hi));
    StateTraits {
        needs_ratio: rng.random_range(0.45..0.95),
        payment_ratio: rng.random_range(0.55..=1.0),
        afdc_up_early: rng.random_bool(0.5),
        ribicoff: rng.random_bool(0.6),
        medically_needy: rng.random_bool(0.6).then(|| draw_ratio(rng, 10_000, 13_300, 100)),
        obra86_year: opt_year(rng, 0.6, 1987, 1989),
        infant_185_year: opt_year(rng, 0.4, 1988, 1995),
        generous_year: opt_year(rng, 0.5, 1989, 1996),
        generous_multiple: draw_ratio(rng, 13_300, 18_500, 500),
        schip_separate: rng.random_bool(0.5),
        schip_multiple: draw_ratio(rng, 20_000, 30_000, 500),
        targeted: rng.random_bool(0.6),
        targeted_multiple: draw_ratio(rng, 15_000, 25_000, 500),
        pregnancy_multiple: draw_ratio(rng, 13_300, 18_500, 500),
    }
}

fn afdc_params(year: i32, region: GuidelineRegion, t: &StateTraits) -> AfdcParams {
    let monthly = guideline_row(year, region);
    let needs: Vec<Cents> = monthly[..AFDC_MAX_SIZE]
        .iter()
        .map(|g| round_dollars(g.as_dollars() / 12.0 * t.needs_ratio))
        .collect();
    let payment = needs.iter().map(|n| round_dollars(n.as_dollars() * t.payment_ratio)).collect();
    let (work_expense, schedule) = AfdcParams::conventional_disregards();
    AfdcParams {
        needs_standard: needs,
        payment_standard: payment,
        gross_income_limit_pct: 185,
        flat_disregard: work_expense,
        earnings_disregards: schedule,
        work_expense_deduction: work_expense,
    }
}

fn cutoff_1983() -> Option<CalDate> {
    Some(CalDate { year: 1983, month: 9, day: 30 })
}

fn expansion(min_age: u32, max_age: u32, bp: u32, cutoff: Option<CalDate>, source: ThresholdSource) -> ExpansionThreshold {
    ExpansionThreshold { min_age, max_age, fpl_multiple: Ratio(bp), birthdate_cutoff: cutoff, source }
}

fn expansions(year: i32, t: &StateTraits) -> Vec<ExpansionThreshold> {
    use ThresholdSource::*;
    let mut out = Vec::new();
    if let Some(y0) = t.obra86_year {
        if year >= y0 {
            let max_age = (year - y0).min(4) as u32;
            out.push(expansion(0, max_age, 10_000, None, PovertyExpansion));
        }
    }
    // One infant-only row at the higher of the optional infant limits.
    let infant = [
        t.infant_185_year.is_some_and(|y0| year >= y0).then_some(18_500),
        t.generous_year.is_some_and(|y0| year >= y0).then_some(t.generous_multiple.0),
    ];
    if let Some(m) = infant.into_iter().flatten().max() {
        out.push(expansion(0, 0, m, None, PovertyExpansion));
    }
    match year {
        1989 => out.push(expansion(0, 0, 7_500, None, PovertyExpansion)),
        y if y >= 1990 => out.push(expansion(0, 5, 13_300, None, PovertyExpansion)),
        _ => {}
    }
    if year >= 1991 {
        out.push(expansion(6, 18, 10_000, cutoff_1983(), PovertyExpansion));
    }
    if year >= 1998 {
        if t.schip_separate {
            out.push(expansion(0, 18, t.schip_multiple.0, None, Schip));
        }
        if t.targeted {
            out.push(expansion(0, 18, t.targeted_multiple.0, None, Targeted));
        }
    }
    // Rows sharing an age band and source are one rule at the highest limit.
    let mut merged: Vec<ExpansionThreshold> = Vec::new();
    for e in out {
        match merged.iter_mut().find(|m| (m.min_age, m.max_age, m.source) == (e.min_age, e.max_age, e.source)) {
            Some(m) if e.fpl_multiple > m.fpl_multiple => *m = e,
            Some(_) => {}
            None => merged.push(e),
        }
    }
    merged
}

fn vintage(state: &StateId, index: usize, year: i32, t: &StateTraits) -> RuleVintage {
    let region = region_for(index);
    let post_prwora = year >= FIRST_POST_PRWORA_YEAR;
    let schip_separate = t.schip_separate && year >= 1998;
    let ribicoff_mandate = match year {
        1985..=1987 => Some(RibicoffMandate { max_age: 4, birthdate_cutoff: cutoff_1983() }),
        1988..=1996 => Some(RibicoffMandate { max_age: 6, birthdate_cutoff: cutoff_1983() }),
        _ => None,
    };
    let pregnancy_limit = match year {
        y if y < 1987 => None,
        1987 | 1988 => Some(Ratio(10_000)),
        _ => Some(t.pregnancy_multiple),
    };
    RuleVintage {
        state: state.clone(),
        year,
        region,
        afdc: afdc_params(year, region, t),
        flags: ProgramFlags {
            afdc_up: year >= 1991 || t.afdc_up_early,
            ribicoff: t.ribicoff,
            medically_needy: t.medically_needy.is_some(),
            schip_separate,
            targeted_medicaid: t.targeted && year >= 1998,
        },
        expansions: expansions(year, t),
        schip: schip_separate.then_some(SchipParams { work_expense_deduction: Cents::from_dollars(90) }),
        medically_needy_limit: t.medically_needy,
        ribicoff_mandate,
        frozen_1931: post_prwora.then(|| afdc_params(FROZEN_YEAR, region, t)),
        post_prwora,
        pregnancy_limit,
    }
}

/// Generates a rule database covering `n_states` states and every year in
/// `first_year..=last_year`. A state's draws do not depend on the year range.
pub fn synthetic_rules(cfg: &SynthRulesConfig) -> RuleSet {
    let mut vintages = BTreeMap::new();
    for (index, state) in state_ids(cfg.n_states).iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("rules/{state}")));
        let traits = draw_traits(&mut rng);
        for year in cfg.first_year..=cfg.last_year {
            vintages.insert((state.clone(), year), vintage(state, index, year, &traits));
        }
    }
    let mut guidelines = PovertyGuidelineTable::default();
    for year in cfg.first_year..=cfg.last_year {
        for region in [GuidelineRegion::Contiguous, GuidelineRegion::Alaska, GuidelineRegion::Hawaii] {
            guidelines.amounts.insert((year, region), guideline_row(year, region));
        }
    }
    RuleSet { vintages, guidelines }
}
