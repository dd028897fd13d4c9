//! Person records, nuclear-family linkage, birth months, synthetic
//! populations and inverse-probability reweighting.

use std::path::PathBuf;

use thiserror::Error;

pub mod birth;
pub mod family;
pub mod record;
pub mod reweight;
pub mod synth;

pub use birth::{assign_birth_months, birth_month, BirthMonthAssignment};
pub use family::{build_nuclear_families, DropEntry, DropReason, FamilyBuild, NuclearFamily};
pub use record::{MaritalStatus, PersonRecord, Population, Relationship, Sex};
pub use reweight::{inverse_probability_reweight, reweight_cells, CellKey, ReweightResult};
pub use synth::{generate_state_panel, generate_synthetic_population, DgpConfig, StatePanelRow};

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Csv { file: String, line: u64, message: String },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}:{line}: column `{column}`: invalid value {value:?}")]
    BadValue { file: String, line: u64, column: String, value: String },
    #[error("person {person_id}: {message}")]
    Invariant { person_id: u64, message: String },
    #[error("duplicate person id {0}")]
    DuplicateId(u64),
    #[error("household {household}: cyclic parent links through person {person}")]
    CyclicRelationship { household: u64, person: u64 },
    #[error("household {household}: spouse link of person {person} is not reciprocated")]
    InconsistentSpouse { household: u64, person: u64 },
    #[error("infeasible generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Rules(#[from] crate::policy_rules::RulesError),
}
