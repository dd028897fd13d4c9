//! Fixed-sample instruments: one base year's donors, with incomes carried to
//! each target year by a price or wage index.
//!
//! Index files are comma-delimited. A national series has columns
//! `year,level`; a regional price series has `year,region,level` plus a
//! separate `state,region` map; the wage series may instead give
//! `year,compensation,employees`, from which the level is average
//! compensation per employee.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::table::DonorFamily;
use super::InstrumentError;
use crate::units::{Cents, StateId, YearMonth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InflatorSeries {
    Cpi,
    Rcpi,
    Wage,
}

impl InflatorSeries {
    pub fn as_str(self) -> &'static str {
        match self {
            InflatorSeries::Cpi => "cpi",
            InflatorSeries::Rcpi => "rcpi",
            InflatorSeries::Wage => "wage",
        }
    }
}

impl fmt::Display for InflatorSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InflatorSeries {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cpi" => Ok(InflatorSeries::Cpi),
            "rcpi" => Ok(InflatorSeries::Rcpi),
            "wage" => Ok(InflatorSeries::Wage),
            other => Err(format!("unknown inflator series {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncomeInflator {
    pub series: InflatorSeries,
    /// Index level by year and region; national series use region `""`.
    pub levels: BTreeMap<(i32, String), f64>,
    pub state_regions: BTreeMap<StateId, String>,
}

impl IncomeInflator {
    pub fn national(series: InflatorSeries, levels: impl IntoIterator<Item = (i32, f64)>) -> Result<IncomeInflator, InstrumentError> {
        let mut map = BTreeMap::new();
        for (year, level) in levels {
            if !(level > 0.0 && level.is_finite()) {
                return Err(InstrumentError::BadIndex { year, level });
            }
            map.insert((year, String::new()), level);
        }
        Ok(IncomeInflator { series, levels: map, state_regions: BTreeMap::new() })
    }

    /// Wage index: compensation of employees over the number of employees.
    pub fn wage(rows: impl IntoIterator<Item = (i32, f64, f64)>) -> Result<IncomeInflator, InstrumentError> {
        Self::national(InflatorSeries::Wage, rows.into_iter().map(|(y, comp, emp)| (y, comp / emp)))
    }

    pub fn regional(
        levels: impl IntoIterator<Item = (i32, String, f64)>,
        state_regions: BTreeMap<StateId, String>,
    ) -> Result<IncomeInflator, InstrumentError> {
        let mut map = BTreeMap::new();
        for (year, region, level) in levels {
            if !(level > 0.0 && level.is_finite()) {
                return Err(InstrumentError::BadIndex { year, level });
            }
            map.insert((year, region), level);
        }
        Ok(IncomeInflator { series: InflatorSeries::Rcpi, levels: map, state_regions })
    }

    pub fn index(&self, year: i32, state: &StateId) -> Result<f64, InstrumentError> {
        let region = match self.series {
            InflatorSeries::Rcpi => Some(self.state_regions.get(state).ok_or_else(|| InstrumentError::MissingRegion(state.clone()))?.clone()),
            _ => None,
        };
        let key = (year, region.clone().unwrap_or_default());
        self.levels.get(&key).copied().ok_or(InstrumentError::MissingIndex { series: self.series, year, region })
    }

    pub fn ratio(&self, base_year: i32, target_year: i32, state: &StateId) -> Result<f64, InstrumentError> {
        Ok(self.index(target_year, state)? / self.index(base_year, state)?)
    }

    /// Reads an index file and, for the regional series, the state map.
    pub fn read_csv(series: InflatorSeries, path: &Path, regions: Option<&Path>) -> Result<IncomeInflator, InstrumentError> {
        let rows = read_rows(path)?;
        let file = path.display().to_string();
        let col = |name: &str| rows.0.iter().position(|h| h == name);
        let need = |name: &str| col(name).ok_or_else(|| InstrumentError::MissingColumn { file: file.clone(), column: name.to_string() });
        let year_c = need("year")?;
        let num = |line: u64, v: &str| v.parse::<f64>().map_err(|_| InstrumentError::Parse { file: file.clone(), line, message: format!("invalid number {v:?}") });
        let year = |line: u64, v: &str| v.parse::<i32>().map_err(|_| InstrumentError::Parse { file: file.clone(), line, message: format!("invalid year {v:?}") });
        match series {
            InflatorSeries::Rcpi => {
                let (region_c, level_c) = (need("region")?, need("level")?);
                let mut levels = Vec::new();
                for (line, r) in &rows.1 {
                    levels.push((year(*line, &r[year_c])?, r[region_c].clone(), num(*line, &r[level_c])?));
                }
                let regions = regions.ok_or_else(|| InstrumentError::MissingInput("state-to-region map for the rcpi series".into()))?;
                let map_rows = read_rows(regions)?;
                let mfile = regions.display().to_string();
                let s_c = map_rows.0.iter().position(|h| h == "state").ok_or(InstrumentError::MissingColumn { file: mfile.clone(), column: "state".into() })?;
                let r_c = map_rows.0.iter().position(|h| h == "region").ok_or(InstrumentError::MissingColumn { file: mfile, column: "region".into() })?;
                let map = map_rows.1.iter().map(|(_, r)| (StateId(r[s_c].clone()), r[r_c].clone())).collect();
                Self::regional(levels, map)
            }
            InflatorSeries::Wage if col("level").is_none() => {
                let (comp_c, emp_c) = (need("compensation")?, need("employees")?);
                let mut out = Vec::new();
                for (line, r) in &rows.1 {
                    out.push((year(*line, &r[year_c])?, num(*line, &r[comp_c])?, num(*line, &r[emp_c])?));
                }
                Self::wage(out)
            }
            _ => {
                let level_c = need("level")?;
                let mut out = Vec::new();
                for (line, r) in &rows.1 {
                    out.push((year(*line, &r[year_c])?, num(*line, &r[level_c])?));
                }
                Self::national(series, out)
            }
        }
    }
}

type Rows = (Vec<String>, Vec<(u64, Vec<String>)>);

fn read_rows(path: &Path) -> Result<Rows, InstrumentError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| InstrumentError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) })?;
    let headers = rdr
        .headers()
        .map_err(|e| InstrumentError::Parse { file: file.clone(), line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| InstrumentError::Parse { file: file.clone(), line: e.position().map(|p| p.line()).unwrap_or(0), message: e.to_string() })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((headers, rows))
}

/// Moves base-year donor families to `target_year`: incomes are scaled by
/// the index ratio and rounded to the cent, birth dates shift with the
/// calendar so ages are unchanged, and nothing else is touched. Families
/// from other years are ignored.
pub fn fixed_eligibility_inputs(
    base: &[DonorFamily],
    base_year: i32,
    inflator: &IncomeInflator,
    target_year: i32,
) -> Result<Vec<DonorFamily>, InstrumentError> {
    let shift = target_year - base_year;
    base.iter()
        .filter(|f| f.year == base_year)
        .map(|f| {
            let ratio = inflator.ratio(base_year, target_year, &f.state)?;
            let mut g = f.clone();
            g.year = target_year;
            g.view.annual_income = Cents((f.view.annual_income.0 as f64 * ratio).round() as i64);
            for c in &mut g.children {
                c.birth = YearMonth::new(c.birth.year + shift, c.birth.month);
            }
            Ok(g)
        })
        .collect()
}
