//! Leave-one-out simulated eligibility.
//!
//! A table cell for target state `s`, year `t`, age `a` and group `g` is the
//! weighted share of donor children of year `t`, age `a` and group `g`,
//! drawn from every state except `s`, who would be eligible under the rules
//! of `s` in `t`. Family totals sum the cells over a mother's children.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::units::StateId;

pub mod fixed;
pub mod io;
pub mod maternal;
pub mod table;

pub use io::{read_family_simt, read_sim_table, write_family_simt, write_sim_table, FamilySimtRow};
pub use fixed::{fixed_eligibility_inputs, IncomeInflator, InflatorSeries};
pub use maternal::{maternal_sim_eligibility, woman_eligible, MaternalMode, WomanRecord};
pub use table::{
    compute_sim_table, compute_sim_table_from, family_simt, rules_sim_table, simt_from_parent_type, CellKey, Donor, DonorBlock,
    DonorFamily, DonorSample, ParentType, SimCell, SimTable, MAX_CHILD_AGE,
};

/// Which donor incomes feed the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Each year's own donors.
    Annual,
    /// Base-year donors with incomes inflated by consumer prices.
    FixedCpi,
    /// As `FixedCpi` with regional price indices.
    FixedRcpi,
    /// Base-year donors with incomes inflated by average compensation.
    FixedWage,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Annual => "annual",
            Variant::FixedCpi => "fixed_cpi",
            Variant::FixedRcpi => "fixed_rcpi",
            Variant::FixedWage => "fixed_wage",
        }
    }

    pub fn series(self) -> Option<InflatorSeries> {
        match self {
            Variant::Annual => None,
            Variant::FixedCpi => Some(InflatorSeries::Cpi),
            Variant::FixedRcpi => Some(InflatorSeries::Rcpi),
            Variant::FixedWage => Some(InflatorSeries::Wage),
        }
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "annual" => Ok(Variant::Annual),
            "fixed_cpi" => Ok(Variant::FixedCpi),
            "fixed_rcpi" => Ok(Variant::FixedRcpi),
            "fixed_wage" => Ok(Variant::FixedWage),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum InstrumentError {
    #[error("undefined cell {0}: no donors outside the target state")]
    UndefinedCell(CellKey),
    #[error("cell {0} is not in the table")]
    MissingCell(CellKey),
    #[error("child age {0} outside 0..=18")]
    AgeOutOfRange(u32),
    #[error("no {series} index for year {year}{}", region.as_ref().map(|r| format!(" region {r}")).unwrap_or_default())]
    MissingIndex { series: InflatorSeries, year: i32, region: Option<String> },
    #[error("no region for state {0}")]
    MissingRegion(StateId),
    #[error("index level must be positive, found {level} for {year}")]
    BadIndex { year: i32, level: f64 },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("reading {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Rules(#[from] crate::policy_rules::RulesError),
}
