//! Straight-line reference for monthly eligibility and random case draws.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use simelig::policy_rules::synth::{synthetic_rules, SynthRulesConfig};
use simelig::policy_rules::*;
use simelig::units::Fraction;
use simelig::{CalDate, Cents, Ratio, StateId, YearMonth};

// ---------------------------------------------------------------------------
// Reference implementation. Written from the legislative description, using
// only raw integer arithmetic on the public rule fields.
// ---------------------------------------------------------------------------

pub fn table_entry(table: &[Cents], size: u32) -> i64 {
    let i = (size as usize).min(table.len()) - 1;
    table[i].0
}

/// Positive benefit, countable income below needs, gross within the limit.
pub fn ref_afdc(monthly: i64, size: u32, p: &AfdcParams) -> bool {
    let needs = table_entry(&p.needs_standard, size);
    let payment = table_entry(&p.payment_standard, size);
    // One month of work, no child care deduction.
    let mut countable = monthly - p.flat_disregard.0;
    if countable < 0 {
        countable = 0;
    }
    for r in &p.earnings_disregards {
        if 1 <= r.months_worked_limit {
            countable -= r.flat_amount.0;
            if countable < 0 {
                countable = 0;
            }
            countable -= countable * r.fraction.num as i64 / r.fraction.den as i64;
            break;
        }
    }
    let first = payment - countable > 0;
    let second = countable < needs;
    let third = monthly as i128 * 100 <= p.gross_income_limit_pct as i128 * needs as i128;
    first && second && third
}

pub fn ref_born_after(birth: YearMonth, cutoff: Option<CalDate>) -> bool {
    match cutoff {
        None => true,
        Some(c) => (birth.year, birth.month, 1u8) > (c.year, c.month, c.day),
    }
}

pub fn ref_expansion(
    v: &RuleVintage,
    source: ThresholdSource,
    per_worker: i64,
    fam: &FamilyView,
    birth: YearMonth,
    age: u32,
    guideline: i64,
) -> bool {
    let net = fam.annual_income.0 - 12 * per_worker * fam.workers as i64;
    for e in &v.expansions {
        if e.source != source || age < e.min_age || age > e.max_age {
            continue;
        }
        if !ref_born_after(birth, e.birthdate_cutoff) {
            continue;
        }
        if (net as i128) * 10_000 < e.fpl_multiple.0 as i128 * guideline as i128 {
            return true;
        }
    }
    false
}

pub fn ref_determine(
    child: &ChildView,
    fam: &FamilyView,
    v: &RuleVintage,
    fpl: &PovertyGuidelineTable,
    month: YearMonth,
) -> Option<Pathway> {
    let months_old = (month.year - child.birth.year) * 12 + month.month as i32 - child.birth.month as i32;
    if months_old < 0 {
        return None;
    }
    let age = (months_old / 12) as u32;
    let monthly = fam.annual_income.0.div_euclid(12);
    let dependent = !child.head_or_spouse;
    let unemployed = fam.primary_earner_monthly_hours < 100 && fam.max_annual_hours <= 1200;
    let row = &fpl.amounts[&(v.year, v.region)];
    let guideline = table_entry(row, fam.family_size);

    if !v.post_prwora {
        let income_ok = ref_afdc(monthly, fam.family_size, &v.afdc);
        if !fam.married && dependent && age <= 17 && income_ok {
            return Some(Pathway::Afdc);
        }
        if v.flags.afdc_up && fam.married && dependent && age <= 17 && unemployed && income_ok {
            return Some(Pathway::AfdcUp);
        }
        if v.flags.ribicoff && fam.married && dependent && age <= 18 && income_ok {
            return Some(Pathway::Ribicoff);
        }
        if let Some(m) = v.ribicoff_mandate {
            if dependent && age <= m.max_age && ref_born_after(child.birth, m.birthdate_cutoff) && income_ok {
                return Some(Pathway::Ribicoff);
            }
        }
        if v.flags.medically_needy {
            let limit = v.medically_needy_limit.unwrap().0 as i128;
            let needs = table_entry(&v.afdc.needs_standard, fam.family_size) as i128;
            if !fam.married && dependent && age <= 17 && (monthly as i128) * 10_000 < limit * needs {
                return Some(Pathway::MedicallyNeedy);
            }
        }
        let wed = v.afdc.work_expense_deduction.0;
        if ref_expansion(v, ThresholdSource::PovertyExpansion, wed, fam, child.birth, age, guideline) {
            return Some(Pathway::PovertyExpansion);
        }
        return None;
    }

    let frozen = v.frozen_1931.as_ref().unwrap();
    let frozen_ok = ref_afdc(monthly, fam.family_size, frozen);
    if dependent && age <= 17 && frozen_ok && (!fam.married || unemployed) {
        return Some(Pathway::Section1931);
    }
    let wed = v.afdc.work_expense_deduction.0;
    if ref_expansion(v, ThresholdSource::PovertyExpansion, wed, fam, child.birth, age, guideline) {
        return Some(Pathway::PovertyExpansion);
    }
    if v.flags.targeted_medicaid && ref_expansion(v, ThresholdSource::Targeted, wed, fam, child.birth, age, guideline) {
        return Some(Pathway::TargetedMedicaid);
    }
    if v.flags.schip_separate {
        let d = v.schip.unwrap().work_expense_deduction.0;
        if ref_expansion(v, ThresholdSource::Schip, d, fam, child.birth, age, guideline) {
            return Some(Pathway::Schip);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Random draws.
// ---------------------------------------------------------------------------

pub fn random_params(rng: &mut ChaCha8Rng, base: &AfdcParams) -> AfdcParams {
    let mut p = base.clone();
    p.gross_income_limit_pct = *[100u32, 150, 185, 250].get(rng.random_range(0..4)).unwrap();
    p.flat_disregard = Cents(rng.random_range(0..=12_000));
    let n_rows = rng.random_range(0..=3);
    p.earnings_disregards = (0..n_rows)
        .map(|i| DisregardRule {
            months_worked_limit: rng.random_range(0..=2) + 4 * i,
            flat_amount: Cents(rng.random_range(0..=5_000)),
            fraction: Fraction { num: rng.random_range(0..=1), den: rng.random_range(1..=4) },
        })
        .collect();
    p.work_expense_deduction = Cents(rng.random_range(0..=15_000));
    p
}

pub fn perturb(rng: &mut ChaCha8Rng, v: &RuleVintage) -> RuleVintage {
    let mut v = v.clone();
    if rng.random_bool(0.5) {
        v.afdc = random_params(rng, &v.afdc);
    }
    if let (true, Some(f)) = (rng.random_bool(0.5), v.frozen_1931.as_ref()) {
        v.frozen_1931 = Some(random_params(rng, f));
    }
    if !v.post_prwora {
        v.flags.afdc_up = rng.random_bool(0.5);
        v.flags.ribicoff = rng.random_bool(0.5);
        v.flags.medically_needy = rng.random_bool(0.5);
        v.medically_needy_limit = v.flags.medically_needy.then(|| Ratio(rng.random_range(10_000..=13_300)));
    }
    v
}

pub fn boundary_income(rng: &mut ChaCha8Rng, v: &RuleVintage, fpl: &PovertyGuidelineTable, size: u32, workers: u32) -> Cents {
    let afdc = v.frozen_1931.as_ref().unwrap_or(&v.afdc);
    let needs = table_entry(&afdc.needs_standard, size);
    let guideline = fpl.lookup(v.year, v.region, size).unwrap().0;
    let wed = 12 * v.afdc.work_expense_deduction.0 * workers as i64;
    let monthly_targets = [
        needs,
        needs + afdc.flat_disregard.0,
        needs * afdc.gross_income_limit_pct as i64 / 100,
        table_entry(&afdc.payment_standard, size) + afdc.flat_disregard.0,
    ];
    match rng.random_range(0..3) {
        0 => Cents(12 * monthly_targets[rng.random_range(0..4)] + rng.random_range(-13..=13)),
        1 => {
            let m = v.expansions.get(rng.random_range(0..v.expansions.len().max(1))).map_or(10_000, |e| e.fpl_multiple.0) as i64;
            Cents(m * guideline / 10_000 + wed + rng.random_range(-2..=2))
        }
        _ => Cents(rng.random_range(0..=8_000_000)),
    }
    .max0()
}

pub fn random_case(
    rng: &mut ChaCha8Rng,
    rules: &[RuleSet],
) -> (ChildView, FamilyView, RuleVintage, usize, YearMonth) {
    let which = rng.random_range(0..rules.len());
    let keys: Vec<&(StateId, i32)> = rules[which].vintages.keys().collect();
    let key = keys[rng.random_range(0..keys.len())];
    let v = perturb(rng, &rules[which].vintages[key]);
    let size = rng.random_range(1..=13);
    let workers = rng.random_range(0..=3);
    let fam = FamilyView {
        married: rng.random_bool(0.5),
        family_size: size,
        annual_income: boundary_income(rng, &v, &rules[which].guidelines, size, workers),
        workers,
        primary_earner_monthly_hours: *[0u32, 40, 99, 100, 101, 173].get(rng.random_range(0..6)).unwrap(),
        max_annual_hours: *[0u32, 800, 1199, 1200, 1201, 2080].get(rng.random_range(0..6)).unwrap(),
    };
    let month = YearMonth::new(v.year, rng.random_range(1..=12));
    let birth = YearMonth::new(v.year - rng.random_range(-1..=19), rng.random_range(1..=12));
    let child = ChildView { id: rng.random(), birth, head_or_spouse: rng.random_bool(0.05) };
    (child, fam, v, which, month)
}

pub fn rule_sets() -> Vec<RuleSet> {
    (0..4u64)
        .map(|seed| synthetic_rules(&SynthRulesConfig { n_states: 12, first_year: 1982, last_year: 2001, seed: seed + 11 }))
        .collect()
}

