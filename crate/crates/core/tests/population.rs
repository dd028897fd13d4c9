//! Family linkage, birth months, the generator and reweighting.

use proptest::prelude::*;

use simelig::policy_rules::synth::{synthetic_rules, SynthRulesConfig};
use simelig::population::*;
use simelig::{Cents, StateId};

fn person(id: u64, household: u64, age: u32, sex: Sex, rel: Relationship) -> PersonRecord {
    PersonRecord {
        person_id: id,
        household_id: household,
        state: StateId::new("ST_A"),
        year: 1990,
        age,
        sex,
        marital_status: MaritalStatus::Single,
        prior_marital_status: None,
        relationship: rel,
        spouse_id: None,
        parent_id: None,
        race_ethnicity: "white".into(),
        earned_income: Cents(0),
        self_employment_income: Cents(0),
        other_income: Cents(0),
        public_assistance: Cents(0),
        weeks_worked: 0,
        usual_hours: 0,
        hours_last_week: 0,
        in_labor_force: false,
        max_monthly_hours: 0,
        imputed: vec![],
        survey_weight: 1.0,
        outcomes: vec![],
    }
}

fn marry(records: &mut [PersonRecord], a: usize, b: usize) {
    let (ia, ib) = (records[a].person_id, records[b].person_id);
    records[a].spouse_id = Some(ib);
    records[b].spouse_id = Some(ia);
    records[a].marital_status = MaritalStatus::Married;
    records[b].marital_status = MaritalStatus::Married;
}

fn ids(records: &[PersonRecord], idx: &[usize]) -> Vec<u64> {
    idx.iter().map(|&i| records[i].person_id).collect()
}

#[test]
fn single_mother_and_child() {
    let mut recs = vec![person(1, 10, 35, Sex::Female, Relationship::Head), person(2, 10, 4, Sex::Male, Relationship::Child)];
    recs[0].earned_income = Cents::from_dollars(12_000);
    recs[0].public_assistance = Cents::from_dollars(3_000);
    recs[1].parent_id = Some(1);
    let b = build_nuclear_families(&recs).unwrap();
    assert_eq!(b.families.len(), 1);
    let f = &b.families[0];
    assert_eq!(f.family_size, 2);
    assert_eq!(f.marital_status, MaritalStatus::Single);
    assert_eq!(f.family_income, Cents::from_dollars(12_000));
    assert!(b.ledger.is_empty());
}

#[test]
fn subfamily_forms_its_own_family() {
    // Head couple with a 12-year-old, plus a 22-year-old daughter and her
    // infant. The infant points at its own mother.
    let mut recs = vec![
        person(1, 20, 50, Sex::Male, Relationship::Head),
        person(2, 20, 48, Sex::Female, Relationship::Spouse),
        person(3, 20, 12, Sex::Male, Relationship::Child),
        person(4, 20, 22, Sex::Female, Relationship::Child),
        person(5, 20, 0, Sex::Female, Relationship::Child),
    ];
    marry(&mut recs, 0, 1);
    recs[0].earned_income = Cents::from_dollars(30_000);
    recs[3].earned_income = Cents::from_dollars(8_000);
    recs[2].parent_id = Some(2);
    recs[3].parent_id = Some(2);
    recs[4].parent_id = Some(4);
    let b = build_nuclear_families(&recs).unwrap();
    assert!(b.ledger.is_empty(), "{:?}", b.ledger);
    let mut fams = b.families.clone();
    fams.sort_by_key(|f| f.family_id);
    assert_eq!(fams.len(), 2);

    let primary = &fams[0];
    assert_eq!(primary.family_id, 2);
    assert_eq!(primary.spouse.map(|s| recs[s].person_id), Some(1));
    assert_eq!(ids(&recs, &primary.children), vec![3]);
    assert_eq!(primary.family_size, 3);
    assert_eq!(primary.marital_status, MaritalStatus::Married);
    assert_eq!(primary.family_income, Cents::from_dollars(30_000));

    let sub = &fams[1];
    assert_eq!(sub.family_id, 4);
    assert_eq!(sub.spouse, None);
    assert_eq!(ids(&recs, &sub.children), vec![5]);
    assert_eq!(sub.family_size, 2);
    assert_eq!(sub.family_income, Cents::from_dollars(8_000));
}

#[test]
fn childless_couple_is_ledgered() {
    let mut recs = vec![person(1, 30, 40, Sex::Male, Relationship::Head), person(2, 30, 38, Sex::Female, Relationship::Spouse)];
    marry(&mut recs, 0, 1);
    let b = build_nuclear_families(&recs).unwrap();
    assert!(b.families.is_empty());
    assert_eq!(b.ledger.len(), 1);
    assert_eq!(b.ledger[0].reason, DropReason::NoChildren);
    assert_eq!(b.ledger[0].person_ids, vec![1, 2]);
}

#[test]
fn orphan_goes_to_ledger() {
    let mut recs = vec![person(1, 40, 70, Sex::Female, Relationship::Head), person(2, 40, 9, Sex::Male, Relationship::Child)];
    recs[1].parent_id = Some(99);
    let b = build_nuclear_families(&recs).unwrap();
    assert!(b.families.is_empty());
    assert!(b.ledger.iter().any(|e| e.reason == DropReason::Orphan && e.person_ids == vec![2]));
    assert_eq!(b.dropped_persons(), 2);
}

#[test]
fn mother_age_gate() {
    let mut recs = vec![person(1, 50, 17, Sex::Female, Relationship::Head), person(2, 50, 1, Sex::Male, Relationship::Child)];
    recs[1].parent_id = Some(1);
    let b = build_nuclear_families(&recs).unwrap();
    assert!(b.families.is_empty());
    assert_eq!(b.ledger[0].reason, DropReason::MotherAge);
}

#[test]
fn cyclic_links_are_fatal() {
    let mut recs = vec![person(1, 60, 30, Sex::Female, Relationship::Head), person(2, 60, 10, Sex::Male, Relationship::Child)];
    recs[0].parent_id = Some(2);
    recs[1].parent_id = Some(1);
    match build_nuclear_families(&recs) {
        Err(PopulationError::CyclicRelationship { household, .. }) => assert_eq!(household, 60),
        other => panic!("expected a cycle error, got {other:?}"),
    }
}

fn small_config() -> DgpConfig {
    DgpConfig {
        n_states: 5,
        first_year: 1990,
        last_year: 1994,
        households_per_cell: 12,
        subfamily_rate: 0.1,
        childless_couple_rate: 0.1,
        imputed_rate: 0.1,
        ..DgpConfig::default()
    }
}

fn small_rules(cfg: &DgpConfig) -> simelig::policy_rules::RuleSet {
    synthetic_rules(&SynthRulesConfig { n_states: cfg.n_states, first_year: cfg.first_year, last_year: cfg.last_year, seed: 3 })
}

#[test]
fn generator_is_deterministic_and_valid() {
    let cfg = small_config();
    let rules = small_rules(&cfg);
    let a = generate_synthetic_population(&cfg, &rules, 7).unwrap();
    let b = generate_synthetic_population(&cfg, &rules, 7).unwrap();
    assert!(a.records.len() >= 1000, "only {} records", a.records.len());
    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    a.write_csv(&pa).unwrap();
    b.write_csv(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    for r in &a.records {
        r.check().unwrap();
    }
    let c = generate_synthetic_population(&cfg, &rules, 8).unwrap();
    assert_ne!(a, c);
    // Outcome cells may be NaN, so compare the round trip as bytes.
    let pc = dir.path().join("c.csv");
    Population::read_csv(&pa).unwrap().write_csv(&pc).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pc).unwrap());
}

#[test]
fn generator_rejects_infeasible_config() {
    let cfg = DgpConfig { n_states: 0, ..DgpConfig::default() };
    let rules = small_rules(&small_config());
    assert!(matches!(generate_synthetic_population(&cfg, &rules, 1), Err(PopulationError::Config(_))));
}

#[test]
fn linkage_conserves_persons() {
    let cfg = small_config();
    let rules = small_rules(&cfg);
    for seed in 0..5 {
        let pop = generate_synthetic_population(&cfg, &rules, seed).unwrap();
        let b = build_nuclear_families(&pop.records).unwrap();
        let in_families: usize = b.families.iter().map(|f| f.family_size as usize).sum();
        assert_eq!(in_families + b.dropped_persons(), pop.records.len(), "seed {seed}");
        assert!(b.ledger.iter().any(|e| e.reason == DropReason::NoChildren));
        for f in &b.families {
            assert!((20..=64).contains(&pop.records[f.mother].age));
            assert!(f.children.iter().all(|&c| pop.records[c].age <= 18));
            assert_eq!(f.family_size as usize, 1 + usize::from(f.spouse.is_some()) + f.children.len());
            assert_eq!(f.marital_status == MaritalStatus::Married, f.spouse.is_some());
        }
    }
}

#[test]
fn birth_months_are_uniform_and_reproducible() {
    let n = 120_000u64;
    let mut counts = [0u64; 12];
    for id in 0..n {
        counts[birth_month(42, id) as usize - 1] += 1;
    }
    for (m, &c) in counts.iter().enumerate() {
        let share = c as f64 / n as f64;
        assert!((share - 1.0 / 12.0).abs() < 0.012, "month {} share {share}", m + 1);
    }
    // Chi-square with 11 df; the 0.999 quantile is 31.26.
    let expected = n as f64 / 12.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 31.26, "chi-square {chi2}");

    let recs: Vec<PersonRecord> = (0..50).map(|i| person(i, i, 5, Sex::Male, Relationship::Child)).collect();
    assert_eq!(assign_birth_months(&recs, 9), assign_birth_months(&recs, 9));
    let mut reversed = recs.clone();
    reversed.reverse();
    assert_eq!(assign_birth_months(&reversed, 9).months, assign_birth_months(&recs, 9).months);
    assert!(assign_birth_months(&[], 9).months.is_empty());
}

fn cell(state: &str, married: bool) -> CellKey {
    CellKey {
        state: StateId::new(state),
        year: 1990,
        marital_status: if married { MaritalStatus::Married } else { MaritalStatus::Single },
    }
}

#[test]
fn reweight_hand_cases() {
    let cells = vec![cell("A", false), cell("A", false), cell("A", false), cell("B", true), cell("C", true)];
    let weights = vec![1.0, 1.0, 2.0, 5.0, 3.0];

    let none = reweight_cells(&cells, &weights, &[false; 5]);
    assert_eq!(none.weights, weights);
    assert!(none.flagged_cells.is_empty());

    // Half of cell A's weight is dropped: survivors double.
    let half = reweight_cells(&cells, &weights, &[true, true, false, false, true]);
    assert_eq!(half.weights[..3], [0.0, 0.0, 4.0]);
    assert_eq!(half.weights[3], 5.0);
    // Cell C loses everything: flagged, original weight kept.
    assert_eq!(half.weights[4], 3.0);
    assert_eq!(half.flagged_cells, vec![cell("C", true)]);
    assert!((half.weights[..3].iter().sum::<f64>() - 4.0).abs() < 1e-9);
}

#[test]
fn reweight_by_imputation_flag() {
    let mut recs: Vec<PersonRecord> = (0..4).map(|i| person(i, i, 30, Sex::Female, Relationship::Head)).collect();
    recs[1].imputed = vec!["hours_per_week".into()];
    let r = inverse_probability_reweight(&recs, |p| p.is_imputed("hours_per_week"));
    assert_eq!(r.dropped, 1);
    assert_eq!(r.weights[1], 0.0);
    assert!((r.weights.iter().sum::<f64>() - 4.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn reweighting_preserves_cell_totals(
        rows in prop::collection::vec((0usize..4, any::<bool>(), 0.0f64..100.0, prop::bool::weighted(0.3)), 1..200)
    ) {
        let states = ["A", "B", "C", "D"];
        let cells: Vec<CellKey> = rows.iter().map(|r| cell(states[r.0], r.1)).collect();
        let weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let dropped: Vec<bool> = rows.iter().map(|r| r.3).collect();
        let out = reweight_cells(&cells, &weights, &dropped);
        for key in &cells {
            let before: f64 = cells.iter().zip(&weights).filter(|(c, _)| *c == key).map(|(_, w)| w).sum();
            let after: f64 = cells.iter().zip(&out.weights).filter(|(c, _)| *c == key).map(|(_, w)| w).sum();
            prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
        }
        for i in 0..rows.len() {
            if dropped[i] && !out.flagged_cells.contains(&cells[i]) {
                prop_assert_eq!(out.weights[i], 0.0);
            }
        }
    }
}
