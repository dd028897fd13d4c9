//! Random birth months.
//!
//! Each person's month is drawn from a generator seeded by the run seed and
//! the person id alone, so the assignment does not depend on record order
//! or on which other persons are present.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::PersonRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BirthMonthAssignment {
    pub seed: u64,
    pub months: BTreeMap<u64, u8>,
}

impl BirthMonthAssignment {
    pub fn get(&self, person_id: u64) -> Option<u8> {
        self.months.get(&person_id).copied()
    }
}

/// Month in `1..=12` for one person.
pub fn birth_month(seed: u64, person_id: u64) -> u8 {
    let mixed = seed.rotate_left(32) ^ person_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed).random_range(1..=12)
}

pub fn assign_birth_months(records: &[PersonRecord], seed: u64) -> BirthMonthAssignment {
    BirthMonthAssignment { seed, months: records.iter().map(|r| (r.person_id, birth_month(seed, r.person_id))).collect() }
}
