//! Regression specification, read from a TOML file.
//!
//! ```toml
//! outcome = "hours_per_week"
//! treatment = "simt"
//! controls = []
//! state_controls = ["unemployment", "min_wage", "max_benefit", "eitc"]
//! factors = ["mother_age", "race", "n_children"]
//! model = 1
//! interact_with_marital = true
//! sample = "all"
//! weight = "weight"
//! cluster = "state"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EstimationError;

/// Fixed-effect structure. Every model has state, year, youngest-age,
/// oldest-age and age-gap effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Model {
    /// The additive baseline.
    M1,
    /// Adds state by youngest age, oldest age and age gap.
    M2,
    /// Adds state by year.
    M3,
    /// Adds year by youngest age, oldest age and age gap.
    M4,
    /// All of the above.
    M5,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::M1, Model::M2, Model::M3, Model::M4, Model::M5];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn state_by_age(self) -> bool {
        matches!(self, Model::M2 | Model::M5)
    }

    pub fn state_by_year(self) -> bool {
        matches!(self, Model::M3 | Model::M5)
    }

    pub fn year_by_age(self) -> bool {
        matches!(self, Model::M4 | Model::M5)
    }

    /// State-level controls are spanned by state-by-year effects.
    pub fn uses_state_controls(self) -> bool {
        !self.state_by_year()
    }
}

impl TryFrom<u8> for Model {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1..=5 => Ok(Model::ALL[v as usize - 1]),
            _ => Err(format!("model must be 1 to 5, found {v}")),
        }
    }
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        m.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sample {
    All,
    Single,
    Married,
}

fn default_treatment() -> Option<String> {
    Some("simt".into())
}
fn default_state() -> String {
    "state".into()
}
fn default_year() -> String {
    "year".into()
}
fn default_youngest() -> String {
    "youngest_age".into()
}
fn default_oldest() -> String {
    "oldest_age".into()
}
fn default_gap() -> String {
    "age_gap".into()
}
fn default_marital() -> String {
    "married".into()
}
fn default_weight() -> Option<String> {
    Some("weight".into())
}
fn default_true() -> bool {
    true
}
fn default_model() -> Model {
    Model::M1
}
fn default_sample() -> Sample {
    Sample::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub outcome: String,
    /// Absent when the regressors alone are of interest.
    #[serde(default = "default_treatment")]
    pub treatment: Option<String>,
    /// Numeric family-level controls.
    #[serde(default)]
    pub controls: Vec<String>,
    /// Numeric state-by-year controls, left out of models with state-by-year
    /// effects.
    #[serde(default)]
    pub state_controls: Vec<String>,
    /// Categorical controls, entered as indicators (absorbed).
    #[serde(default)]
    pub factors: Vec<String>,
    #[serde(default = "default_state")]
    pub state: String,
    #[serde(default = "default_year")]
    pub year: String,
    #[serde(default = "default_youngest")]
    pub youngest_age: String,
    #[serde(default = "default_oldest")]
    pub oldest_age: String,
    #[serde(default = "default_gap")]
    pub age_gap: String,
    #[serde(default = "default_model")]
    pub model: Model,
    /// Interact every control and fixed effect with the marital indicator.
    #[serde(default = "default_true")]
    pub interact_with_marital: bool,
    /// 0/1 column, 1 for married mothers.
    #[serde(default = "default_marital")]
    pub marital: String,
    #[serde(default = "default_sample")]
    pub sample: Sample,
    #[serde(default = "default_weight")]
    pub weight: Option<String>,
    #[serde(default = "default_state")]
    pub cluster: String,
    /// Absorb fixed effects; otherwise every level becomes a dummy column.
    #[serde(default = "default_true")]
    pub absorb: bool,
    /// Outcome cutoffs for the indicator series; empty for a single fit.
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

impl RegressionSpec {
    pub fn new(outcome: &str) -> RegressionSpec {
        toml::from_str(&format!("outcome = {outcome:?}")).expect("minimal spec parses")
    }

    pub fn from_toml(text: &str) -> Result<RegressionSpec, EstimationError> {
        let spec: RegressionSpec = toml::from_str(text).map_err(|e| EstimationError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<RegressionSpec, EstimationError> {
        let text = std::fs::read_to_string(path).map_err(|e| EstimationError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        if let Some(t) = &self.treatment {
            if self.controls.contains(t) || self.state_controls.contains(t) || self.factors.contains(t) {
                return Err(EstimationError::Spec(format!("treatment {t} is also a control")));
            }
            if t == &self.outcome {
                return Err(EstimationError::Spec(format!("treatment {t} is the outcome")));
            }
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EstimationError::Spec("thresholds must be strictly increasing".into()));
        }
        Ok(())
    }
}
