//! Medicaid eligibility rules engine.
//!
//! Rules live in versioned, delimited files (see [`loader`]) and are
//! evaluated month by month for each child by [`engine`].

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::units::StateId;

pub mod engine;
pub mod loader;
pub mod synth;
pub mod types;

pub use engine::{
    afdc_financial_tests, annualize_eligibility, countable_income, determine_monthly_eligibility, evaluate_year,
    pathway_eligible, AfdcTestOutcome, DEFAULT_MONTHS_WORKED, ChildView, EligibilityResult, Evaluator, FamilyView, Pathway, ReferencePeriod,
};
pub use loader::{load_rules, write_rules, RULES_HEADER};
pub use types::{
    AfdcParams, DisregardRule, ExpansionThreshold, GuidelineRegion, PovertyGuidelineTable, ProgramFlags,
    RibicoffMandate, RuleSet, RuleVintage, SchipParams, ThresholdSource,
};

/// One failed invariant, located in the rule files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub file: String,
    pub line: Option<usize>,
    pub key: String,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {} field `{}`: {}", self.file, l, self.key, self.field, self.message),
            None => write!(f, "{}: {} field `{}`: {}", self.file, self.key, self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: empty file")]
    Empty { file: String },
    #[error("{file}:1: expected schema header `{expected}`, found {found:?}")]
    BadHeader { file: String, expected: &'static str, found: String },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: unknown column `{column}`")]
    UnknownColumn { file: String, column: String },
    #[error("{file}:{line}: duplicate key {key}")]
    DuplicateKey { file: String, line: usize, key: String },
    #[error("{} invariant violation(s); first: {}", violations.len(), violations[0])]
    Invariant { violations: Vec<Violation> },
    #[error("pathway {pathway} is not enabled for {state} {year}")]
    FlagDisabled { pathway: engine::Pathway, state: StateId, year: i32 },
    #[error("no July-1996 AFDC rules for {state} (needed for {year})")]
    MissingFrozen { state: StateId, year: i32 },
    #[error("no rule vintage for {state} {year}")]
    MissingVintage { state: StateId, year: i32 },
    #[error("no poverty guideline for {year} ({region})")]
    MissingGuideline { year: i32, region: GuidelineRegion },
    #[error("invalid family size {0}")]
    InvalidFamilySize(u32),
}
