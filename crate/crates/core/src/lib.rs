//! Simulated Medicaid eligibility for children and its use as an instrument
//! in mother-level fixed-effects regressions.
//!
//! The crate is organised as a pipeline:
//!
//! * [`policy_rules`] evaluates a child's monthly eligibility under a
//!   versioned, file-backed set of state rules.
//! * [`population`] links person records into nuclear families, assigns
//!   birth months, generates synthetic populations and reweights samples.
//! * [`instrument`] builds leave-one-out simulated-eligibility tables and
//!   family totals.
//! * [`estimation`] fits weighted least squares with absorbed fixed effects
//!   and state-clustered standard errors.
//! * [`postanalysis`] turns fitted coefficients into elasticities, TOT
//!   effects and a fiscal ledger.
//! * [`pipeline`] and [`manifest`] wire the stages together for batch runs.

pub mod estimation;
pub mod instrument;
pub mod manifest;
pub mod pipeline;
pub mod policy_rules;
pub mod population;
pub mod postanalysis;
pub mod units;

pub use units::{CalDate, Cents, Ratio, StateId, YearMonth};
