//! Brute-force leave-one-out cells and a three-state donor fixture.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simelig::instrument::*;
use simelig::StateId;

pub fn st(s: &str) -> StateId {
    StateId::new(s)
}

pub fn donor(state: &str, age: u32, group: &str, weight: f64) -> Donor {
    Donor { state: st(state), year: 1990, age, group: group.into(), weight }
}

// ---------------------------------------------------------------------------
// Brute-force table oracle.
// ---------------------------------------------------------------------------

/// Direct enumeration: for each target state, every matching donor from
/// every other state.
pub fn brute_force(donors: &[Donor], elig: &dyn Fn(usize, &StateId) -> f64, state: &str, age: u32, group: &str) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, d) in donors.iter().enumerate() {
        if d.state.as_str() != state && d.age == age && d.group == group && d.year == 1990 {
            num += d.weight * elig(i, &st(state));
            den += d.weight;
        }
    }
    (den > 0.0).then(|| num / den)
}

pub fn three_state_fixture() -> (Vec<Donor>, BTreeMap<(usize, String), f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut donors = Vec::new();
    for s in ["A", "B", "C"] {
        for _ in 0..40 {
            let group = if rng.random_bool(0.5) { "married" } else { "single" };
            donors.push(donor(s, rng.random_range(0..=4), group, rng.random_range(0.5..3.0)));
        }
    }
    let mut elig = BTreeMap::new();
    for i in 0..donors.len() {
        for s in ["A", "B", "C"] {
            let e = *[0.0, 0.25, 0.5, 1.0].get(rng.random_range(0..4)).unwrap();
            elig.insert((i, s.to_string()), e);
        }
    }
    (donors, elig)
}

pub fn targets(states: &[&str]) -> Vec<(StateId, i32)> {
    states.iter().map(|s| (st(s), 1990)).collect()
}

