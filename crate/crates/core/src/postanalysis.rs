//! Arithmetic on fitted effects: take-up elasticities, the conversion from
//! intent-to-treat to treatment-on-the-treated, allocation of aggregate
//! Medicaid spending to children, and the fiscal offset ledger.
//!
//! Amounts here are dollars as `f64`; allocation divides costs across
//! ages, so results are not whole cents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PostError {
    #[error("mean coverage must be positive, found {0}")]
    ZeroCoverage(f64),
    #[error("take-up rate must lie in (0, 1], found {0}")]
    TakeUpRange(f64),
    #[error("{what} must be finite, found {value}")]
    NotFinite { what: &'static str, value: f64 },
    #[error("eligible weight for age {age} is negative")]
    NegativeWeight { age: u32 },
    #[error("age {age} has eligible weight but population {population}")]
    MissingPopulation { age: u32, population: f64 },
    #[error("Medicaid cost must be positive, found {0}")]
    NonPositiveCost(f64),
    #[error("no rows for year {0}")]
    EmptyYear(i32),
}

fn finite(what: &'static str, value: f64) -> Result<f64, PostError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PostError::NotFinite { what, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeUpEstimate {
    /// Coverage effect per simulated eligible child.
    pub beta_takeup: f64,
    pub mean_simt: f64,
    /// Covered children per family.
    pub mean_coverage: f64,
    pub group: String,
}

/// Percent change in coverage per percent change in simulated eligibility,
/// evaluated at the means.
pub fn takeup_elasticity(est: &TakeUpEstimate) -> Result<f64, PostError> {
    let beta = finite("take-up coefficient", est.beta_takeup)?;
    let simt = finite("mean SIMT", est.mean_simt)?;
    let cov = finite("mean coverage", est.mean_coverage)?;
    if cov <= 0.0 {
        return Err(PostError::ZeroCoverage(cov));
    }
    Ok(beta * simt / cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotResult {
    pub itt_beta: f64,
    /// Average SIMT increase from the first to the last year.
    pub delta_simt: f64,
    pub takeup_rate: f64,
    pub scaled_itt: f64,
    pub tot: f64,
    pub scale_factor: f64,
}

/// Scales a per-eligible-child effect by the eligibility increase and
/// divides by take-up. `tot` is computed as `itt_beta * scale_factor`.
pub fn itt_to_tot(itt_beta: f64, delta_simt: f64, takeup_rate: f64) -> Result<TotResult, PostError> {
    let itt_beta = finite("ITT coefficient", itt_beta)?;
    let delta_simt = finite("SIMT change", delta_simt)?;
    if !(takeup_rate > 0.0 && takeup_rate <= 1.0) {
        return Err(PostError::TakeUpRange(takeup_rate));
    }
    let scale_factor = delta_simt / takeup_rate;
    Ok(TotResult { itt_beta, delta_simt, takeup_rate, scaled_itt: itt_beta * delta_simt, tot: itt_beta * scale_factor, scale_factor })
}

/// Weighted mean SIMT in the last year minus the first.
pub fn delta_simt(simt: &[f64], weights: &[f64], years: &[i32]) -> Result<f64, PostError> {
    let (first, last) = match (years.iter().min(), years.iter().max()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(PostError::EmptyYear(0)),
    };
    let mean = |year: i32| {
        let (mut s, mut w) = (0.0, 0.0);
        for ((&v, &wt), &y) in simt.iter().zip(weights).zip(years) {
            if y == year {
                s += wt * v;
                w += wt;
            }
        }
        if w > 0.0 {
            Ok(s / w)
        } else {
            Err(PostError::EmptyYear(year))
        }
    };
    Ok(mean(last)? - mean(first)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostAllocation {
    /// Cost per child at each age.
    pub per_capita: BTreeMap<u32, f64>,
    /// Set when no age has eligible weight; everything is zero.
    pub degenerate: bool,
}

impl CostAllocation {
    /// Sum of the per-child costs of the family's children; ages without an
    /// allocation cost nothing.
    pub fn family_cost(&self, child_ages: &[u32]) -> f64 {
        child_ages.iter().map(|a| self.per_capita.get(a).copied().unwrap_or(0.0)).sum()
    }

    /// Per-capita costs times populations; equals the input cost.
    pub fn reaggregate(&self, population_by_age: &BTreeMap<u32, f64>) -> f64 {
        self.per_capita.iter().map(|(a, c)| c * population_by_age.get(a).copied().unwrap_or(0.0)).sum()
    }
}

/// Splits a state-year cost across ages by the share of eligible weight at
/// each age, then divides by the population of that age.
pub fn disaggregate_medicaid_cost(
    state_year_cost: f64,
    eligible_weight_by_age: &BTreeMap<u32, f64>,
    population_by_age: &BTreeMap<u32, f64>,
) -> Result<CostAllocation, PostError> {
    let cost = finite("Medicaid cost", state_year_cost)?;
    let mut total = 0.0;
    for (&age, &w) in eligible_weight_by_age {
        if finite("eligible weight", w)? < 0.0 {
            return Err(PostError::NegativeWeight { age });
        }
        total += w;
    }
    if total == 0.0 {
        log::warn!("no eligible weight at any age; cost allocation is zero");
        return Ok(CostAllocation { per_capita: eligible_weight_by_age.keys().map(|&a| (a, 0.0)).collect(), degenerate: true });
    }
    let mut per_capita = BTreeMap::new();
    for (&age, &w) in eligible_weight_by_age {
        if w == 0.0 {
            per_capita.insert(age, 0.0);
            continue;
        }
        let pop = population_by_age.get(&age).copied().unwrap_or(0.0);
        if !(pop > 0.0 && pop.is_finite()) {
            return Err(PostError::MissingPopulation { age, population: pop });
        }
        per_capita.insert(age, cost * (w / total) / pop);
    }
    Ok(CostAllocation { per_capita, degenerate: false })
}

/// Transfer programs whose reductions count toward the headline offset.
pub const OFFSET_PROGRAMS: [&str; 4] = ["public_assistance", "education_assistance", "school_lunch", "energy_subsidy"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiscalInputs {
    pub group: String,
    pub medicaid_cost: f64,
    pub tax_revenue_change: f64,
    /// Change in transfer income by program; negative is a reduction.
    pub transfer_changes: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiscalLedger {
    pub group: String,
    pub medicaid_cost: f64,
    pub tax_revenue_change: f64,
    pub transfer_changes: BTreeMap<String, f64>,
    /// Cost minus tax revenue gained plus transfer changes.
    pub net_fiscal_cost: f64,
    /// Transfer reductions in the offset programs over the cost.
    pub offset_share: f64,
}

pub fn fiscal_balance(inputs: &FiscalInputs) -> Result<FiscalLedger, PostError> {
    let cost = finite("Medicaid cost", inputs.medicaid_cost)?;
    if cost <= 0.0 {
        return Err(PostError::NonPositiveCost(cost));
    }
    let tax = finite("tax revenue change", inputs.tax_revenue_change)?;
    let mut transfers = 0.0;
    let mut reductions = 0.0;
    for (program, &v) in &inputs.transfer_changes {
        let v = finite("transfer change", v)?;
        transfers += v;
        if OFFSET_PROGRAMS.contains(&program.as_str()) && v < 0.0 {
            reductions -= v;
        }
    }
    Ok(FiscalLedger {
        group: inputs.group.clone(),
        medicaid_cost: cost,
        tax_revenue_change: tax,
        transfer_changes: inputs.transfer_changes.clone(),
        net_fiscal_cost: cost - tax + transfers,
        offset_share: reductions / cost,
    })
}

/// Plain-text summary of TOT conversions and fiscal ledgers.
pub fn summary_text(tots: &[(String, TotResult)], ledgers: &[FiscalLedger], elasticities: &[(String, f64)]) -> String {
    let mut s = String::new();
    for (group, t) in tots {
        let _ = writeln!(
            s,
            "{group}: ITT {:.4} per eligible child, SIMT change {:.4}, take-up {:.4}, scale {:.3}, TOT {:.4}",
            t.itt_beta, t.delta_simt, t.takeup_rate, t.scale_factor, t.tot
        );
    }
    for (group, e) in elasticities {
        let _ = writeln!(s, "{group}: take-up elasticity {e:.3}");
    }
    for l in ledgers {
        let _ = writeln!(
            s,
            "{}: Medicaid cost {:.2}, tax change {:.2}, net fiscal cost {:.2}, transfer offset {:.1}% of cost",
            l.group,
            l.medicaid_cost,
            l.tax_revenue_change,
            l.net_fiscal_cost,
            100.0 * l.offset_share
        );
    }
    s
}
