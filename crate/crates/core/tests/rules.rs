//! Rules engine against a straight-line reference, plus loader fixtures.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use simelig::policy_rules::synth::{synthetic_rules, SynthRulesConfig};
use simelig::policy_rules::*;
use simelig::{CalDate, Cents, Ratio, StateId, YearMonth};

mod support;
use support::rules_oracle::*;

#[test]
fn engine_agrees_with_reference_on_random_cases() {
    let rules = rule_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let start = Instant::now();
    let mut hits: BTreeMap<Option<Pathway>, usize> = BTreeMap::new();
    for case in 0..1_000 {
        let (child, fam, v, which, month) = random_case(&mut rng, &rules);
        let fpl = &rules[which].guidelines;
        let expected = ref_determine(&child, &fam, &v, fpl, month);
        let got = determine_monthly_eligibility(&child, &fam, &v, fpl, month).unwrap();
        assert_eq!(got, expected, "case {case}: {child:?} {fam:?} {} {} {month}", v.state, v.year);
        *hits.entry(got).or_default() += 1;
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
    // Every pathway and the ineligible outcome must be exercised.
    assert_eq!(hits.len(), 9, "{hits:?}");
}

#[test]
fn evaluate_year_matches_reference_month_by_month() {
    let rules = rule_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..300 {
        let (child, fam, v, which, _) = random_case(&mut rng, &rules);
        let fpl = &rules[which].guidelines;
        let res = evaluate_year(&child, &fam, &v, fpl, ReferencePeriod::LastYear).unwrap();
        for m in 1..=12u8 {
            assert_eq!(res.months[m as usize - 1], ref_determine(&child, &fam, &v, fpl, YearMonth::new(v.year, m)));
        }
        assert_eq!(res.annual_fraction * 12.0, res.eligible_months() as f64);
        let week = evaluate_year(&child, &fam, &v, fpl, ReferencePeriod::LastWeek).unwrap();
        assert_eq!(week.march_eligible, res.months[2].is_some());
        assert!(week.months.iter().enumerate().all(|(i, m)| i == 2 || m.is_none()));
    }
}

// ---------------------------------------------------------------------------
// Hand-worked cases.
// ---------------------------------------------------------------------------

fn hand_params() -> AfdcParams {
    AfdcParams {
        needs_standard: vec![Cents::from_dollars(400), Cents::from_dollars(450), Cents::from_dollars(500)],
        payment_standard: vec![Cents::from_dollars(350), Cents::from_dollars(400), Cents::from_dollars(450)],
        gross_income_limit_pct: 185,
        flat_disregard: Cents::from_dollars(90),
        earnings_disregards: vec![],
        work_expense_deduction: Cents::from_dollars(90),
    }
}

#[test]
fn afdc_tests_hand_cases() {
    let p = AfdcParams {
        needs_standard: vec![Cents::from_dollars(500)],
        payment_standard: vec![Cents::from_dollars(300)],
        ..hand_params()
    };
    let zero = afdc_financial_tests(Cents(0), 1, 1, &p).unwrap();
    assert!(zero.benefit_test && zero.needs_test && zero.gross_test && zero.overall());

    let p = hand_params();
    let high = afdc_financial_tests(Cents::from_dollars(600), 3, 1, &p).unwrap();
    assert_eq!(high.countable_income, Cents::from_dollars(510));
    assert_eq!(high.benefit, Cents(0));
    assert!(!high.benefit_test && !high.overall());

    let low = afdc_financial_tests(Cents::from_dollars(400), 3, 1, &p).unwrap();
    assert_eq!(low.countable_income, Cents::from_dollars(310));
    assert_eq!(low.benefit, Cents::from_dollars(140));
    assert!(low.benefit_test && low.needs_test && low.gross_test && low.overall());
}

#[test]
fn family_size_beyond_table_clamps() {
    let mut p = hand_params();
    p.needs_standard = vec![Cents::from_dollars(100), Cents::from_dollars(200)];
    p.payment_standard = p.needs_standard.clone();
    let at_max = afdc_financial_tests(Cents::from_dollars(50), 2, 1, &p).unwrap();
    let beyond = afdc_financial_tests(Cents::from_dollars(50), 9, 1, &p).unwrap();
    assert_eq!(at_max, beyond);
    assert!(matches!(afdc_financial_tests(Cents(0), 0, 1, &p), Err(RulesError::InvalidFamilySize(0))));
}

fn hand_vintage(year: i32) -> (RuleVintage, PovertyGuidelineTable) {
    let v = RuleVintage {
        state: StateId::new("ST_A"),
        year,
        region: GuidelineRegion::Contiguous,
        afdc: hand_params(),
        flags: ProgramFlags { afdc_up: true, ..Default::default() },
        expansions: vec![ExpansionThreshold {
            min_age: 0,
            max_age: 5,
            fpl_multiple: Ratio(13_300),
            birthdate_cutoff: None,
            source: ThresholdSource::PovertyExpansion,
        }],
        schip: None,
        medically_needy_limit: None,
        ribicoff_mandate: None,
        frozen_1931: (year >= 1997).then(hand_params),
        post_prwora: year >= 1997,
        pregnancy_limit: None,
    };
    let mut fpl = PovertyGuidelineTable::default();
    fpl.amounts.insert((year, GuidelineRegion::Contiguous), [8_000, 9_000, 10_000, 11_000].map(Cents::from_dollars).to_vec());
    (v, fpl)
}

fn family(married: bool, annual_dollars: i64) -> FamilyView {
    FamilyView {
        married,
        family_size: 3,
        annual_income: Cents::from_dollars(annual_dollars),
        workers: 0,
        primary_earner_monthly_hours: 0,
        max_annual_hours: 0,
    }
}

fn child_born(year: i32, month: u8) -> ChildView {
    ChildView { id: 1, birth: YearMonth::new(year, month), head_or_spouse: false }
}

#[test]
fn afdc_up_hours_limit() {
    let (v, fpl) = hand_vintage(1992);
    let mut fam = family(true, 0);
    let child = child_born(1985, 1);
    let month = YearMonth::new(1992, 6);
    assert!(pathway_eligible(Pathway::AfdcUp, &child, &fam, &v, &fpl, month).unwrap());
    fam.primary_earner_monthly_hours = 120;
    assert!(!pathway_eligible(Pathway::AfdcUp, &child, &fam, &v, &fpl, month).unwrap());
}

#[test]
fn poverty_expansion_threshold_and_cutoff() {
    let (mut v, fpl) = hand_vintage(1992);
    let child = child_born(1988, 1);
    let month = YearMonth::new(1992, 6);
    assert!(pathway_eligible(Pathway::PovertyExpansion, &child, &family(true, 10_000), &v, &fpl, month).unwrap());
    assert!(!pathway_eligible(Pathway::PovertyExpansion, &child, &family(true, 15_000), &v, &fpl, month).unwrap());
    // Exactly at the limit is not below it.
    assert!(!pathway_eligible(Pathway::PovertyExpansion, &child, &family(true, 13_300), &v, &fpl, month).unwrap());

    v.expansions[0].max_age = 18;
    v.expansions[0].birthdate_cutoff = Some(CalDate { year: 1983, month: 9, day: 30 });
    let early = child_born(1983, 6);
    assert!(!pathway_eligible(Pathway::PovertyExpansion, &early, &family(true, 0), &v, &fpl, month).unwrap());
}

#[test]
fn disabled_pathway_is_an_error() {
    let (v, fpl) = hand_vintage(1992);
    let r = pathway_eligible(Pathway::MedicallyNeedy, &child_born(1985, 1), &family(false, 0), &v, &fpl, YearMonth::new(1992, 1));
    assert!(matches!(r, Err(RulesError::FlagDisabled { .. })));
}

#[test]
fn missing_frozen_rules_is_an_error() {
    let (mut v, fpl) = hand_vintage(1998);
    v.frozen_1931 = None;
    let r = determine_monthly_eligibility(&child_born(1990, 1), &family(false, 0), &v, &fpl, YearMonth::new(1998, 1));
    assert!(matches!(r, Err(RulesError::MissingFrozen { .. })));
}

#[test]
fn precedence_and_absence() {
    let (v, fpl) = hand_vintage(1992);
    let month = YearMonth::new(1992, 6);
    let young = child_born(1990, 1);
    // Zero income passes AFDC and the expansion; AFDC wins.
    assert_eq!(determine_monthly_eligibility(&young, &family(false, 0), &v, &fpl, month).unwrap(), Some(Pathway::Afdc));
    assert_eq!(determine_monthly_eligibility(&young, &family(false, 90_000), &v, &fpl, month).unwrap(), None);

    let (v, fpl) = hand_vintage(1998);
    let month = YearMonth::new(1998, 6);
    assert_eq!(
        determine_monthly_eligibility(&young, &family(false, 4_000), &v, &fpl, month).unwrap(),
        Some(Pathway::Section1931)
    );
}

#[test]
fn age_cap_mid_year_gives_half_year() {
    let (v, fpl) = hand_vintage(1992);
    // Turns 6 in July 1992: eligible January to June under the 0-5 band.
    // The income fails every AFDC-based pathway.
    let child = child_born(1986, 7);
    let res = evaluate_year(&child, &family(true, 9_000), &v, &fpl, ReferencePeriod::LastYear).unwrap();
    assert_eq!(res.annual_fraction, 0.5);
    assert!(res.months[..6].iter().all(|m| *m == Some(Pathway::PovertyExpansion)));
    assert!(res.months[6..].iter().all(Option::is_none));

    let full = evaluate_year(&child_born(1990, 1), &family(true, 9_000), &v, &fpl, ReferencePeriod::LastYear).unwrap();
    assert_eq!(full.annual_fraction, 1.0);
}

// ---------------------------------------------------------------------------
// Properties.
// ---------------------------------------------------------------------------

#[test]
fn eligibility_is_non_increasing_in_income() {
    let rules = rule_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let (child, fam, v, which, month) = random_case(&mut rng, &rules);
        let fpl = &rules[which].guidelines;
        let mut was_eligible = true;
        for step in 0..60 {
            let f = FamilyView { annual_income: Cents(step * 150_000), ..fam };
            let now = determine_monthly_eligibility(&child, &f, &v, fpl, month).unwrap().is_some();
            assert!(was_eligible || !now, "eligibility returned at income {}", f.annual_income);
            was_eligible = now;
        }
    }
}

#[test]
fn raising_standards_never_removes_eligibility() {
    let rules = rule_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let (child, fam, v, which, month) = random_case(&mut rng, &rules);
        let fpl = &rules[which].guidelines;
        let before = determine_monthly_eligibility(&child, &fam, &v, fpl, month).unwrap().is_some();
        let mut up = v.clone();
        let bump = |p: &mut AfdcParams| {
            p.needs_standard.iter_mut().for_each(|c| c.0 += 5_000);
            p.payment_standard.iter_mut().for_each(|c| c.0 += 5_000);
        };
        bump(&mut up.afdc);
        if let Some(f) = up.frozen_1931.as_mut() {
            bump(f);
        }
        up.expansions.iter_mut().for_each(|e| e.fpl_multiple.0 += 1_000);
        let after = determine_monthly_eligibility(&child, &fam, &up, fpl, month).unwrap().is_some();
        assert!(!before || after);
    }
}

#[test]
fn repeated_calls_are_identical() {
    let rules = rule_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (child, fam, v, which, _) = random_case(&mut rng, &rules);
        let fpl = &rules[which].guidelines;
        let a = evaluate_year(&child, &fam, &v, fpl, ReferencePeriod::LastYear).unwrap();
        let b = evaluate_year(&child, &fam, &v, fpl, ReferencePeriod::LastYear).unwrap();
        assert_eq!(a, b);
    }
}

// ---------------------------------------------------------------------------
// Loader.
// ---------------------------------------------------------------------------

fn two_vintages() -> RuleSet {
    let mut rules = RuleSet::default();
    for year in [1985, 1986] {
        let (v, fpl) = hand_vintage(year);
        rules.vintages.insert(v.key(), v);
        rules.guidelines.amounts.extend(fpl.amounts);
    }
    rules
}

#[test]
fn fixture_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rules = two_vintages();
    write_rules(dir.path(), &rules).unwrap();
    let loaded = load_rules(dir.path()).unwrap();
    let keys: Vec<_> = loaded.vintages.keys().cloned().collect();
    assert_eq!(keys, vec![(StateId::new("ST_A"), 1985), (StateId::new("ST_A"), 1986)]);
    assert_eq!(loaded, rules);
}

#[test]
fn gross_limit_below_hundred_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut rules = two_vintages();
    rules.vintages.values_mut().next().unwrap().afdc.gross_income_limit_pct = 80;
    write_rules(dir.path(), &rules).unwrap();
    match load_rules(dir.path()) {
        Err(RulesError::Invariant { violations }) => {
            assert!(violations.iter().any(|v| v.field == "gross_income_limit_pct"), "{violations:?}");
        }
        other => panic!("expected invariant violation, got {other:?}"),
    }
}

#[test]
fn duplicate_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_rules(dir.path(), &two_vintages()).unwrap();
    let path = dir.path().join("flags.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let first_row = text.lines().nth(2).unwrap().to_string();
    std::fs::write(&path, format!("{text}{first_row}\n")).unwrap();
    assert!(matches!(load_rules(dir.path()), Err(RulesError::DuplicateKey { .. })));
}

#[test]
fn synthetic_rules_round_trip_for_several_seeds() {
    for seed in [1u64, 2, 3, 99] {
        let rules = synthetic_rules(&SynthRulesConfig { n_states: 20, first_year: 1980, last_year: 2002, seed });
        let dir = tempfile::tempdir().unwrap();
        write_rules(dir.path(), &rules).unwrap();
        assert_eq!(load_rules(dir.path()).unwrap(), rules, "seed {seed}");
    }
}
