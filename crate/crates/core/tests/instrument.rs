//! Leave-one-out tables, family totals, fixed-sample and maternal variants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simelig::instrument::*;
use simelig::policy_rules::synth::{synthetic_rules, SynthRulesConfig};
use simelig::policy_rules::*;
use simelig::{Cents, Ratio, StateId, YearMonth};

mod support;
use support::sim_oracle::*;

#[test]
fn three_state_table_matches_brute_force() {
    let (donors, elig) = three_state_fixture();
    let e = |i: usize, s: &StateId| elig[&(i, s.as_str().to_string())];
    let table = compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::Annual, e).unwrap();
    let mut checked = 0;
    for s in ["A", "B", "C"] {
        for age in 0..=4 {
            for g in ["married", "single"] {
                let expected = brute_force(&donors, &e, s, age, g);
                let cell = table.cells[&CellKey { state: st(s), year: 1990, age, group: g.into() }];
                match (expected, cell.value) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12, "{s} {age} {g}: {x} vs {y}"),
                    (None, None) => {}
                    other => panic!("{s} {age} {g}: {other:?}"),
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 30);
}

#[test]
fn own_state_perturbation_leaves_cells_unchanged() {
    let (mut donors, mut elig) = three_state_fixture();
    let before = {
        let e = |i: usize, s: &StateId| elig[&(i, s.as_str().to_string())];
        compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::Annual, e).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (i, d) in donors.iter_mut().enumerate() {
        if d.state.as_str() == "A" {
            d.weight *= rng.random_range(0.1..10.0);
            for s in ["A", "B", "C"] {
                elig.insert((i, s.to_string()), rng.random_range(0.0..=1.0));
            }
        }
    }
    let e = |i: usize, s: &StateId| elig[&(i, s.as_str().to_string())];
    let after = compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::Annual, e).unwrap();
    let mut compared = 0;
    for (k, v) in &before.cells {
        if k.state.as_str() == "A" {
            assert_eq!(v.value.map(f64::to_bits), after.cells[k].value.map(f64::to_bits), "{k}");
            compared += 1;
        }
    }
    assert!(compared > 0);
    assert!(before.cells.iter().any(|(k, v)| k.state.as_str() != "A" && after.cells[k] != *v));
}

#[test]
fn pooled_cell_is_weighted_average_of_groups() {
    let (donors, elig) = three_state_fixture();
    let e = |i: usize, s: &StateId| elig[&(i, s.as_str().to_string())];
    let grouped = compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::Annual, e).unwrap();
    let pooled_donors: Vec<Donor> = donors.iter().map(|d| Donor { group: "all".into(), ..d.clone() }).collect();
    let pooled = compute_sim_table_from(&pooled_donors, &targets(&["A", "B", "C"]), true, Variant::Annual, e).unwrap();
    for (k, cell) in &pooled.cells {
        let (mut num, mut den) = (0.0, 0.0);
        for g in ["married", "single"] {
            if let Some(c) = grouped.cells.get(&CellKey { group: g.into(), ..k.clone() }) {
                if let Some(v) = c.value {
                    num += c.donor_weight * v;
                    den += c.donor_weight;
                }
            }
        }
        let v = cell.value.unwrap();
        assert!((v - num / den).abs() < 1e-12, "{k}");
    }
}

#[test]
fn all_eligible_gives_unit_cells() {
    let (donors, _) = three_state_fixture();
    let table = compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::Annual, |_, _| 1.0).unwrap();
    for c in table.cells.values() {
        if let Some(v) = c.value {
            assert_eq!(v, 1.0);
        }
    }
}

#[test]
fn single_state_leave_one_out_is_undefined() {
    let donors = vec![donor("A", 3, "single", 1.0), donor("A", 5, "single", 2.0)];
    let table = compute_sim_table_from(&donors, &targets(&["A"]), true, Variant::Annual, |_, _| 1.0).unwrap();
    assert_eq!(table.undefined_cells().count(), 2);
    let err = family_simt(&[3], &st("A"), 1990, "single", &table).unwrap_err();
    assert!(matches!(err, InstrumentError::UndefinedCell(ref k) if k.age == 3), "{err}");
    // The diagnostic mode keeps own-state donors.
    let open = compute_sim_table_from(&donors, &targets(&["A"]), false, Variant::Annual, |_, _| 1.0).unwrap();
    assert_eq!(open.undefined_cells().count(), 0);
}

// ---------------------------------------------------------------------------
// Family totals.
// ---------------------------------------------------------------------------

fn two_cell_table() -> SimTable {
    // Age 3: one of two donors eligible. Age 5: three of five.
    let mut donors = Vec::new();
    let mut elig = Vec::new();
    for e in [1.0, 0.0] {
        donors.push(donor("B", 3, "single", 1.0));
        elig.push(e);
    }
    for e in [1.0, 1.0, 1.0, 0.0, 0.0] {
        donors.push(donor("B", 5, "single", 1.0));
        elig.push(e);
    }
    compute_sim_table_from(&donors, &targets(&["A"]), true, Variant::Annual, |i, _| elig[i]).unwrap()
}

#[test]
fn two_children_sum_exactly() {
    let table = two_cell_table();
    assert_eq!(table.lookup(&st("A"), 1990, 3, "single").unwrap(), 0.5);
    assert_eq!(table.lookup(&st("A"), 1990, 5, "single").unwrap(), 0.6);
    assert_eq!(family_simt(&[3, 5], &st("A"), 1990, "single", &table).unwrap(), 1.1);
    assert_eq!(family_simt(&[], &st("A"), 1990, "single", &table).unwrap(), 0.0);
}

fn per_age_table(values: &[f64; 19]) -> SimTable {
    let donors: Vec<Donor> = (0..19).map(|a| donor("B", a, "single", 1.0)).collect();
    compute_sim_table_from(&donors, &targets(&["A"]), true, Variant::Annual, |i, _| values[i]).unwrap()
}

#[test]
fn parent_type_matches_per_child_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let values: [f64; 19] = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
    let table = per_age_table(&values);
    let ages = [1, 1, 3, 5, 5];
    let pt = ParentType::from_ages(&ages).unwrap();
    let mut expected = [0u32; 19];
    expected[1] = 2;
    expected[3] = 1;
    expected[5] = 2;
    assert_eq!(pt.0, expected);
    let direct = family_simt(&ages, &st("A"), 1990, "single", &table).unwrap();
    let by_type = simt_from_parent_type(&pt, &st("A"), 1990, "single", &table).unwrap();
    assert!((direct - by_type).abs() < 1e-12);
    assert!((direct - (2.0 * values[1] + values[3] + 2.0 * values[5])).abs() < 1e-12);
    assert!(matches!(ParentType::from_ages(&[19]), Err(InstrumentError::AgeOutOfRange(19))));
}

proptest! {
    #[test]
    fn family_totals_are_bounded_and_additive(
        values in prop::array::uniform19(0.0f64..=1.0),
        ages in prop::collection::vec(0u32..=18, 0..10),
        split in 0usize..10,
    ) {
        let table = per_age_table(&values);
        let total = family_simt(&ages, &st("A"), 1990, "single", &table).unwrap();
        prop_assert!(total >= 0.0 && total <= ages.len() as f64 + 1e-12);
        let k = split.min(ages.len());
        let left = family_simt(&ages[..k], &st("A"), 1990, "single", &table).unwrap();
        let right = family_simt(&ages[k..], &st("A"), 1990, "single", &table).unwrap();
        prop_assert!((left + right - total).abs() < 1e-12);
    }

    #[test]
    fn table_values_lie_in_unit_interval(
        rows in prop::collection::vec((0usize..3, 0u32..3, 0.01f64..5.0, 0.0f64..=1.0), 1..60)
    ) {
        let states = ["A", "B", "C"];
        let donors: Vec<Donor> = rows.iter().map(|r| donor(states[r.0], r.1, "g", r.2)).collect();
        let table = compute_sim_table_from(&donors, &targets(&states), true, Variant::Annual, |i, _| rows[i].3).unwrap();
        for c in table.cells.values() {
            if let Some(v) = c.value {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rules-based tables.
// ---------------------------------------------------------------------------

fn expansion_only_rules(states: &[&str], years: &[i32]) -> RuleSet {
    let afdc = AfdcParams {
        needs_standard: vec![Cents::from_dollars(400), Cents::from_dollars(450), Cents::from_dollars(500)],
        payment_standard: vec![Cents::from_dollars(350), Cents::from_dollars(400), Cents::from_dollars(450)],
        gross_income_limit_pct: 185,
        flat_disregard: Cents::from_dollars(90),
        earnings_disregards: vec![],
        work_expense_deduction: Cents::from_dollars(90),
    };
    let mut rules = RuleSet::default();
    for &y in years {
        for (i, &s) in states.iter().enumerate() {
            let v = RuleVintage {
                state: st(s),
                year: y,
                region: GuidelineRegion::Contiguous,
                afdc: afdc.clone(),
                flags: ProgramFlags::default(),
                expansions: vec![ExpansionThreshold {
                    min_age: 0,
                    max_age: 5,
                    fpl_multiple: Ratio(13_300 + 1_000 * i as u32),
                    birthdate_cutoff: None,
                    source: ThresholdSource::PovertyExpansion,
                }],
                schip: None,
                medically_needy_limit: None,
                ribicoff_mandate: None,
                frozen_1931: None,
                post_prwora: false,
                pregnancy_limit: Some(Ratio(13_300 + 1_000 * i as u32)),
            };
            rules.vintages.insert(v.key(), v);
        }
        rules.guidelines.amounts.insert((y, GuidelineRegion::Contiguous), [8_000, 10_000, 12_000].map(Cents::from_dollars).to_vec());
    }
    rules
}

/// A married two-person family with one child aged 2 at the end of `year`.
fn toy_family(state: &str, year: i32, income_dollars: i64, weight: f64) -> DonorFamily {
    DonorFamily {
        state: st(state),
        year,
        group: "married".into(),
        view: FamilyView {
            married: true,
            family_size: 2,
            annual_income: Cents::from_dollars(income_dollars),
            workers: 0,
            primary_earner_monthly_hours: 160,
            max_annual_hours: 2000,
        },
        children: vec![ChildView { id: 1, birth: YearMonth::new(year - 2, 1), head_or_spouse: false }],
        ages: vec![2],
        weights: vec![weight],
    }
}

#[test]
fn fixed_inputs_identity_and_doubling() {
    let base: Vec<DonorFamily> = (0..5).map(|k| toy_family("A", 1990, 5_001 + 997 * k, 1.0)).collect();
    let inflator = IncomeInflator::national(InflatorSeries::Cpi, [(1990, 130.7), (1991, 261.4), (1992, 140.0)]).unwrap();
    let same = fixed_eligibility_inputs(&base, 1990, &inflator, 1990).unwrap();
    assert_eq!(same, base);
    let doubled = fixed_eligibility_inputs(&base, 1990, &inflator, 1991).unwrap();
    for (b, d) in base.iter().zip(&doubled) {
        assert_eq!(d.view.annual_income.0, 2 * b.view.annual_income.0);
        assert_eq!(d.year, 1991);
        assert_eq!(d.ages, b.ages);
        assert_eq!(d.children[0].birth, YearMonth::new(1989, 1));
    }
    assert!(matches!(
        fixed_eligibility_inputs(&base, 1990, &inflator, 1993),
        Err(InstrumentError::MissingIndex { year: 1993, .. })
    ));
}

#[test]
fn fixed_wage_differs_from_annual_in_a_hand_checked_cell() {
    let rules = expansion_only_rules(&["A", "B"], &[1990, 1991]);
    // Ten base-year donors in each state, incomes 5k to 23k in 2k steps.
    let mut base = Vec::new();
    let mut annual = Vec::new();
    for s in ["A", "B"] {
        for k in 0..10 {
            base.push(toy_family(s, 1990, 5_000 + 2_000 * k, 1.0));
            annual.push(toy_family(s, 1991, 5_000 + 2_000 * k, 1.0));
        }
    }
    let wage = IncomeInflator::wage([(1990, 1_000.0, 10.0), (1991, 1_500.0, 10.0)]).unwrap();
    let fixed = fixed_eligibility_inputs(&base, 1990, &wage, 1991).unwrap();
    let t = vec![(st("A"), 1991), (st("B"), 1991)];
    let fixed_table = rules_sim_table(&fixed, &t, true, Variant::FixedWage, &rules, ReferencePeriod::LastYear).unwrap();
    let annual_table = rules_sim_table(&annual, &t, true, Variant::Annual, &rules, ReferencePeriod::LastYear).unwrap();
    // State A's limit is 1.33 x 10,000. Annual donors from B below 13,300:
    // 5k, 7k, 9k, 11k, 13k. Inflated by 1.5: 7.5k and 10.5k only.
    assert_eq!(annual_table.lookup(&st("A"), 1991, 2, "married").unwrap(), 0.5);
    assert_eq!(fixed_table.lookup(&st("A"), 1991, 2, "married").unwrap(), 0.2);
    // State B's limit is 1.43 x 10,000: the same five annual donors, and
    // three inflated ones (7.5k, 10.5k, 13.5k).
    assert_eq!(annual_table.lookup(&st("B"), 1991, 2, "married").unwrap(), 0.5);
    assert_eq!(fixed_table.lookup(&st("B"), 1991, 2, "married").unwrap(), 0.3);
    assert_eq!(fixed_table.variant, Variant::FixedWage);
}

#[test]
fn rules_table_is_independent_of_thread_count() {
    let rules = synthetic_rules(&SynthRulesConfig { n_states: 8, first_year: 1990, last_year: 1992, seed: 5 });
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let states = rules.states();
    let families: Vec<DonorFamily> = (0..600)
        .map(|_| {
            let s = states[rng.random_range(0..states.len())].as_str().to_string();
            let year = rng.random_range(1990..=1992);
            let mut f = toy_family(&s, year, rng.random_range(0..40_000), rng.random_range(0.5..2.0));
            f.view.married = rng.random_bool(0.5);
            f.group = if f.view.married { "married".into() } else { "single".into() };
            let age = rng.random_range(0..=18);
            f.children[0].birth = YearMonth::new(year - age as i32, rng.random_range(1..=12));
            f.ages = vec![age];
            f
        })
        .collect();
    let t: Vec<(StateId, i32)> = states.iter().flat_map(|s| (1990..=1992).map(move |y| (s.clone(), y))).collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rules_sim_table(&families, &t, true, Variant::Annual, &rules, ReferencePeriod::LastYear).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.cells.len(), many.cells.len());
    for (k, v) in &one.cells {
        assert_eq!(v.value.map(f64::to_bits), many.cells[k].value.map(f64::to_bits));
    }
}

// ---------------------------------------------------------------------------
// Maternal tables.
// ---------------------------------------------------------------------------

fn woman(id: u64, state: &str, race: &str, income_dollars: i64, infant: bool) -> WomanRecord {
    WomanRecord {
        person_id: id,
        state: st(state),
        year: 1990,
        race: race.into(),
        age: 28,
        view: FamilyView {
            married: true,
            family_size: 1,
            annual_income: Cents::from_dollars(income_dollars),
            workers: 0,
            primary_earner_monthly_hours: 160,
            max_annual_hours: 2000,
        },
        weight: 1.0 + id as f64,
        infant_mother: infant,
    }
}

#[test]
fn maternal_two_group_toy() {
    let rules = expansion_only_rules(&["A", "B", "C"], &[1990]);
    // Family of two with the expected child: guideline 10,000. Limits are
    // 13,300 (A), 14,300 (B) and 15,300 (C).
    let incomes = [9_000, 13_800, 14_800, 20_000];
    let mut women = Vec::new();
    let mut id = 0;
    for s in ["A", "B", "C"] {
        for (k, &inc) in incomes.iter().enumerate() {
            women.push(woman(id, s, if k % 2 == 0 { "x" } else { "y" }, inc, k == 0));
            id += 1;
        }
    }
    let t = targets(&["A", "B", "C"]);
    let table = maternal_sim_eligibility(&women, MaternalMode::AllWomen15to44, &t, &rules).unwrap();
    let limit = |s: &str| match s {
        "A" => 13_300,
        "B" => 14_300,
        _ => 15_300,
    };
    for s in ["A", "B", "C"] {
        for race in ["x", "y"] {
            let (mut num, mut den) = (0.0, 0.0);
            for w in women.iter().filter(|w| w.state.as_str() != s && w.race == race) {
                den += w.weight;
                if w.view.annual_income < Cents::from_dollars(limit(s)) {
                    num += w.weight;
                }
            }
            let got = table.lookup(&st(s), 1990, 0, race).unwrap();
            assert!((got - num / den).abs() < 1e-12, "{s} {race}: {got} vs {}", num / den);
        }
    }

    let rich: Vec<WomanRecord> = women.iter().map(|w| WomanRecord { view: FamilyView { annual_income: Cents(0), ..w.view }, ..w.clone() }).collect();
    let all = maternal_sim_eligibility(&rich, MaternalMode::AllWomen15to44, &t, &rules).unwrap();
    assert!(all.cells.values().all(|c| c.value == Some(1.0)));

    let no_infants: Vec<WomanRecord> = women.iter().map(|w| WomanRecord { infant_mother: false, ..w.clone() }).collect();
    let empty = maternal_sim_eligibility(&no_infants, MaternalMode::MothersOfInfants, &t, &rules).unwrap();
    assert!(!empty.cells.is_empty());
    assert!(empty.cells.values().all(|c| c.value.is_none()));
}

#[test]
fn sim_table_round_trips_through_csv() {
    let (donors, elig) = three_state_fixture();
    let e = |i: usize, s: &StateId| elig[&(i, s.as_str().to_string())];
    let table = compute_sim_table_from(&donors, &targets(&["A", "B", "C"]), true, Variant::FixedCpi, e).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    write_sim_table(&table, &path).unwrap();
    let back = read_sim_table(&path).unwrap();
    assert_eq!(back.variant, Variant::FixedCpi);
    assert_eq!(back.cells.len(), table.cells.len());
    for (k, v) in &table.cells {
        assert_eq!(back.cells[k].value.map(f64::to_bits), v.value.map(f64::to_bits), "{k}");
    }
}
