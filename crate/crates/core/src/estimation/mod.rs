//! Weighted least squares with absorbed fixed effects and state-clustered
//! standard errors, plus the model families built on it.

use thiserror::Error;

pub mod absorb;
pub mod analysis;
pub mod design;
pub mod frame;
pub mod spec;
pub mod wls;

pub use absorb::{absorb_fixed_effects, AbsorbOptions, AbsorbReport};
pub use analysis::{
    policy_endogeneity_test, remaining_variation, threshold_regressions, EndogeneityPanel, RemainingVariation, ThresholdFit,
};
pub use design::{build_design, build_design_on, fixed_effect_dof, write_sample_ledger, DesignMatrix, SampleDrop, INTERCEPT};
pub use frame::{Column, Factor, Frame};
pub use spec::{Model, RegressionSpec, Sample};
pub use wls::{cr1_factor, fit, p_value, stars, wls_fit, FitResult, COLLINEAR_TOLERANCE};

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("{path}: {message}")]
    Io { path: std::path::PathBuf, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{0}` is not numeric")]
    NotNumeric(String),
    #[error("column `{column}` has a missing value in row {row}")]
    MissingValue { column: String, row: usize },
    #[error("column `{column}`, row {row}: {message}")]
    BadValue { column: String, row: usize, message: String },
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("estimation sample is empty")]
    EmptySample,
    #[error("clustered covariance needs at least two clusters")]
    SingleCluster,
    #[error("{rows} rows cannot identify {params} parameters")]
    TooFewRows { rows: usize, params: usize },
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("fixed effects have not been absorbed")]
    NotAbsorbed,
    #[error("absorbing `{column}` did not converge in {iterations} sweeps (last change {last_change:e})")]
    NotConverged { column: String, iterations: usize, last_change: f64 },
    #[error("lag {lag} leaves no usable years in a {years}-year panel")]
    LagTooLong { lag: usize, years: usize },
}
