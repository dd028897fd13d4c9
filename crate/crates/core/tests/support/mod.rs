//! Oracles shared by the unit suites and the acceptance run.
#![allow(dead_code)]

pub mod fit_oracle;
pub mod rules_oracle;
pub mod sim_oracle;
