//! Model families: indicator-threshold series, remaining variation of the
//! treatment across fixed-effect models, and the policy-endogeneity panel
//! regression.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::absorb::{absorb_fixed_effects, AbsorbOptions};
use super::design::{build_design, build_design_on, DesignMatrix};
use super::frame::{Factor, Frame};
use super::spec::{Model, RegressionSpec};
use super::wls::{fit, FitResult};
use super::EstimationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub threshold: f64,
    /// Share of the sample above the threshold, weighted.
    pub share_above: f64,
    /// `None` when the indicator is constant in the sample.
    pub fit: Option<FitResult>,
}

impl ThresholdFit {
    pub fn degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

/// Name of the indicator outcome for `threshold`.
pub fn indicator_name(outcome: &str, threshold: f64) -> String {
    format!("{outcome}>{threshold}")
}

/// One fit per threshold with the outcome replaced by the indicator that it
/// exceeds the threshold. Regressors are absorbed once and shared.
pub fn threshold_regressions(frame: &Frame, spec: &RegressionSpec, thresholds: &[f64], opts: &AbsorbOptions) -> Result<Vec<ThresholdFit>, EstimationError> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EstimationError::Spec("thresholds must be strictly increasing".into()));
    }
    let mut base = build_design(frame, spec)?;
    absorb_fixed_effects(&mut base, opts)?;
    let w_total: f64 = base.weights.iter().sum();
    let mut out = Vec::with_capacity(thresholds.len());
    for &x in thresholds {
        let ind: Vec<f64> = base.y_raw.iter().map(|&y| if y > x { 1.0 } else { 0.0 }).collect();
        let share_above = ind.iter().zip(&base.weights).map(|(i, w)| i * w).sum::<f64>() / w_total;
        let constant = ind.iter().all(|&v| v == ind[0]);
        let fit = if constant {
            log::warn!("indicator {} is constant in the sample; fit skipped", indicator_name(&spec.outcome, x));
            None
        } else {
            let mut d = base.with_outcome(&indicator_name(&spec.outcome, x), ind);
            Some(fit(&mut d, opts)?)
        };
        out.push(ThresholdFit { threshold: x, share_above, fit });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainingVariation {
    pub model: Model,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub n_params: usize,
}

/// Regresses the treatment on each model's controls and fixed effects. All
/// models use the rows that survive model 5's singleton screen, so the
/// samples are identical and the regressor sets nest.
pub fn remaining_variation(frame: &Frame, spec: &RegressionSpec, opts: &AbsorbOptions) -> Result<Vec<RemainingVariation>, EstimationError> {
    let treatment = spec.treatment.clone().ok_or_else(|| EstimationError::Spec("remaining variation needs a treatment".into()))?;
    let base = RegressionSpec { outcome: treatment, treatment: None, thresholds: Vec::new(), ..spec.clone() };
    let widest = build_design(frame, &RegressionSpec { model: Model::M5, ..base.clone() })?;
    let rows = widest.rows.clone();
    drop(widest);
    Model::ALL
        .iter()
        .map(|&model| {
            let mut d = build_design_on(frame, &RegressionSpec { model, ..base.clone() }, Some(&rows))?;
            let f = fit(&mut d, opts)?;
            Ok(RemainingVariation { model, r2: f.r2, adj_r2: f.adj_r2, n_obs: f.n_obs, n_params: f.n_params })
        })
        .collect()
}

/// State-by-year panel for the endogeneity regression.
#[derive(Debug, Clone, PartialEq)]
pub struct EndogeneityPanel {
    pub states: Vec<String>,
    pub years: Vec<i32>,
    pub outcome_name: String,
    /// Outcome, e.g. the maximum child eligibility limit.
    pub outcome: Vec<f64>,
    pub characteristics: Vec<(String, Vec<f64>)>,
}

impl EndogeneityPanel {
    pub fn from_frame(frame: &Frame, state: &str, year: &str, outcome: &str, characteristics: &[String]) -> Result<Self, EstimationError> {
        let st = frame.factor(state)?;
        let years = frame.numeric(year)?;
        Ok(EndogeneityPanel {
            states: st.codes.iter().map(|&c| st.levels[c as usize].clone()).collect(),
            years: years.iter().map(|&y| y as i32).collect(),
            outcome_name: outcome.to_string(),
            outcome: frame.numeric(outcome)?.to_vec(),
            characteristics: characteristics.iter().map(|c| Ok((c.clone(), frame.numeric(c)?.to_vec()))).collect::<Result<_, EstimationError>>()?,
        })
    }
}

/// Regresses the outcome on characteristics lagged `lag` years, with state
/// and year effects and state clusters. A row is used when the same state
/// has a row `lag` years earlier.
pub fn policy_endogeneity_test(panel: &EndogeneityPanel, lag: usize, opts: &AbsorbOptions) -> Result<FitResult, EstimationError> {
    let mut distinct: Vec<i32> = panel.years.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if lag >= distinct.len() {
        return Err(EstimationError::LagTooLong { lag, years: distinct.len() });
    }
    let index: BTreeMap<(&str, i32), usize> = panel.states.iter().zip(&panel.years).enumerate().map(|(i, (s, &y))| ((s.as_str(), y), i)).collect();
    let mut rows = Vec::new();
    let mut sources = Vec::new();
    for (&(s, y), &i) in &index {
        if let Some(&j) = index.get(&(s, y - lag as i32)) {
            rows.push(i);
            sources.push(j);
        }
    }
    if rows.is_empty() {
        return Err(EstimationError::LagTooLong { lag, years: distinct.len() });
    }
    let suffix = if lag == 0 { String::new() } else { format!("_lag{lag}") };
    let columns = panel
        .characteristics
        .iter()
        .map(|(name, v)| (format!("{name}{suffix}"), sources.iter().map(|&j| v[j]).collect()))
        .collect();
    let state_names: Vec<String> = rows.iter().map(|&i| panel.states[i].clone()).collect();
    let state = Factor::from_strings("state", &state_names);
    let year = Factor::from_numbers("year", &rows.iter().map(|&i| panel.years[i] as f64).collect::<Vec<_>>())?;
    let mut d = DesignMatrix::from_columns(
        &panel.outcome_name,
        rows.iter().map(|&i| panel.outcome[i]).collect(),
        columns,
        vec![1.0; rows.len()],
        &state.codes,
    )?;
    d.period = year.codes.clone();
    d.set_absorbed(vec![state, year]);
    fit(&mut d, opts)
}
