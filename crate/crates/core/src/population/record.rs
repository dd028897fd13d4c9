//! The person-record schema.
//!
//! Population files are comma-delimited with a header row. The columns
//! below are required; any further column is read as a numeric outcome
//! (blank cells become NaN).
//!
//! | column | type | notes |
//! |--------|------|-------|
//! | `person_id`, `household_id` | integer | person ids are unique |
//! | `state`, `year` | text, integer | `year` is the income reference year |
//! | `age` | integer 0..=120 | completed years at the end of `year` |
//! | `sex` | `female` / `male` | |
//! | `marital_status` | `single` / `married` | |
//! | `prior_marital_status` | optional, as above | |
//! | `relationship` | `head` / `spouse` / `child` / `other` | |
//! | `spouse_id`, `parent_id` | optional integer | person ids in the same household |
//! | `race_ethnicity` | text | |
//! | `earned_income`, `self_employment_income`, `other_income`, `public_assistance` | dollars per year | |
//! | `weeks_worked`, `usual_hours`, `hours_last_week`, `max_monthly_hours` | integer | |
//! | `in_labor_force` | 0/1 | |
//! | `imputed` | `|`-separated field names | |
//! | `survey_weight` | real ≥ 0 | |
//!
//! `parent_id` names the nearest parent: a child of a subfamily points at
//! the subfamily parent, not at the household head.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::PopulationError;
use crate::units::{Cents, StateId, YearMonth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaritalStatus {
    Single,
    Married,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relationship {
    Head,
    Spouse,
    Child,
    Other,
}

macro_rules! text_enum {
    ($t:ty, $($v:path => $s:literal),+) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $($v => $s),+ }
            }
        }
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s { $($s => Ok($v),)+ other => Err(other.to_string()) }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(Sex, Sex::Female => "female", Sex::Male => "male");
text_enum!(MaritalStatus, MaritalStatus::Single => "single", MaritalStatus::Married => "married");
text_enum!(Relationship, Relationship::Head => "head", Relationship::Spouse => "spouse", Relationship::Child => "child", Relationship::Other => "other");

#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub person_id: u64,
    pub household_id: u64,
    pub state: StateId,
    pub year: i32,
    pub age: u32,
    pub sex: Sex,
    pub marital_status: MaritalStatus,
    pub prior_marital_status: Option<MaritalStatus>,
    pub relationship: Relationship,
    pub spouse_id: Option<u64>,
    pub parent_id: Option<u64>,
    pub race_ethnicity: String,
    pub earned_income: Cents,
    pub self_employment_income: Cents,
    pub other_income: Cents,
    pub public_assistance: Cents,
    pub weeks_worked: u32,
    pub usual_hours: u32,
    pub hours_last_week: u32,
    pub in_labor_force: bool,
    pub max_monthly_hours: u32,
    pub imputed: Vec<String>,
    pub survey_weight: f64,
    /// Values of the population's extra outcome columns, in column order.
    pub outcomes: Vec<f64>,
}

impl PersonRecord {
    /// Income from every source except public assistance.
    pub fn income_ex_welfare(&self) -> Cents {
        self.earned_income + self.self_employment_income + self.other_income
    }

    pub fn annual_hours(&self) -> u32 {
        self.usual_hours * self.weeks_worked
    }

    /// Birth month implied by the end-of-year age and an assigned month.
    pub fn birth(&self, birth_month: u8) -> YearMonth {
        YearMonth::new(self.year - self.age as i32, birth_month)
    }

    pub fn is_imputed(&self, field: &str) -> bool {
        self.imputed.iter().any(|f| f == field)
    }

    pub fn check(&self) -> Result<(), PopulationError> {
        let fail = |message: String| Err(PopulationError::Invariant { person_id: self.person_id, message });
        if self.age > 120 {
            return fail(format!("age {} outside 0..=120", self.age));
        }
        if !(self.survey_weight.is_finite() && self.survey_weight >= 0.0) {
            return fail(format!("survey weight {} must be finite and non-negative", self.survey_weight));
        }
        if self.spouse_id == Some(self.person_id) || self.parent_id == Some(self.person_id) {
            return fail("links to itself".into());
        }
        Ok(())
    }
}

/// Survey-timed records give income for the year before the survey and
/// age in March of the survey year. Returns the birth month and the
/// end-of-income-year age, or `None` for a person born after the income year.
pub fn align_survey_age(survey_year: i32, march_age: u32, birth_month: u8) -> Option<(YearMonth, u32)> {
    let birth_year = if birth_month <= 3 { survey_year - march_age as i32 } else { survey_year - march_age as i32 - 1 };
    let income_year = survey_year - 1;
    let age = income_year - birth_year;
    (age >= 0).then(|| (YearMonth::new(birth_year, birth_month), age as u32))
}

pub const COLUMNS: &[&str] = &[
    "person_id",
    "household_id",
    "state",
    "year",
    "age",
    "sex",
    "marital_status",
    "prior_marital_status",
    "relationship",
    "spouse_id",
    "parent_id",
    "race_ethnicity",
    "earned_income",
    "self_employment_income",
    "other_income",
    "public_assistance",
    "weeks_worked",
    "usual_hours",
    "hours_last_week",
    "in_labor_force",
    "max_monthly_hours",
    "imputed",
    "survey_weight",
];

/// A set of person records sharing one list of outcome columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Population {
    pub outcome_columns: Vec<String>,
    pub records: Vec<PersonRecord>,
}

struct Cells<'a> {
    file: &'a str,
    line: u64,
    rec: &'a csv::StringRecord,
    idx: &'a [usize],
}

impl Cells<'_> {
    fn raw(&self, col: usize) -> &str {
        self.rec.get(self.idx[col]).unwrap_or("")
    }

    fn bad(&self, col: usize) -> PopulationError {
        PopulationError::BadValue {
            file: self.file.to_string(),
            line: self.line,
            column: COLUMNS[col].to_string(),
            value: self.raw(col).to_string(),
        }
    }

    fn get<T: FromStr>(&self, col: usize) -> Result<T, PopulationError> {
        self.raw(col).parse().map_err(|_| self.bad(col))
    }

    fn opt<T: FromStr>(&self, col: usize) -> Result<Option<T>, PopulationError> {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.get(col).map(Some)
        }
    }

    fn flag(&self, col: usize) -> Result<bool, PopulationError> {
        match self.raw(col) {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => Err(self.bad(col)),
        }
    }
}

impl Population {
    pub fn outcome_index(&self, name: &str) -> Option<usize> {
        self.outcome_columns.iter().position(|c| c == name)
    }

    pub fn read_csv(path: &Path) -> Result<Population, PopulationError> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| PopulationError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) })?;
        let headers = rdr
            .headers()
            .map_err(|e| PopulationError::Csv { file: file.clone(), line: 1, message: e.to_string() })?
            .clone();
        let mut idx = Vec::with_capacity(COLUMNS.len());
        for c in COLUMNS {
            match headers.iter().position(|h| h == *c) {
                Some(i) => idx.push(i),
                None => return Err(PopulationError::MissingColumn { file, column: c.to_string() }),
            }
        }
        let extra: Vec<(usize, String)> =
            headers.iter().enumerate().filter(|(_, h)| !COLUMNS.contains(h)).map(|(i, h)| (i, h.to_string())).collect();
        let mut records = Vec::new();
        let mut rec = csv::StringRecord::new();
        loop {
            match rdr.read_record(&mut rec) {
                Ok(false) => break,
                Ok(true) => {}
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    return Err(PopulationError::Csv { file, line, message: e.to_string() });
                }
            }
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let c = Cells { file: &file, line, rec: &rec, idx: &idx };
            let imputed_raw = c.raw(21);
            let outcomes = extra
                .iter()
                .map(|(i, name)| {
                    let v = rec.get(*i).unwrap_or("");
                    if v.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        v.parse::<f64>().map_err(|_| PopulationError::BadValue {
                            file: file.clone(),
                            line,
                            column: name.clone(),
                            value: v.to_string(),
                        })
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let person = PersonRecord {
                person_id: c.get(0)?,
                household_id: c.get(1)?,
                state: StateId(c.raw(2).to_string()),
                year: c.get(3)?,
                age: c.get(4)?,
                sex: c.get(5)?,
                marital_status: c.get(6)?,
                prior_marital_status: c.opt(7)?,
                relationship: c.get(8)?,
                spouse_id: c.opt(9)?,
                parent_id: c.opt(10)?,
                race_ethnicity: c.raw(11).to_string(),
                earned_income: c.get(12)?,
                self_employment_income: c.get(13)?,
                other_income: c.get(14)?,
                public_assistance: c.get(15)?,
                weeks_worked: c.get(16)?,
                usual_hours: c.get(17)?,
                hours_last_week: c.get(18)?,
                in_labor_force: c.flag(19)?,
                max_monthly_hours: c.get(20)?,
                imputed: imputed_raw.split('|').filter(|s| !s.is_empty()).map(str::to_string).collect(),
                survey_weight: c.get(22)?,
                outcomes,
            };
            person.check()?;
            records.push(person);
        }
        Ok(Population { outcome_columns: extra.into_iter().map(|(_, n)| n).collect(), records })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), PopulationError> {
        let io = |source| PopulationError::Io { path: path.to_path_buf(), source };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        let mut header: Vec<&str> = COLUMNS.to_vec();
        header.extend(self.outcome_columns.iter().map(String::as_str));
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.person_id,
                r.household_id,
                r.state,
                r.year,
                r.age,
                r.sex,
                r.marital_status,
                r.prior_marital_status.map(|m| m.as_str()).unwrap_or(""),
                r.relationship,
                opt(r.spouse_id),
                opt(r.parent_id),
                r.race_ethnicity,
                r.earned_income,
                r.self_employment_income,
                r.other_income,
                r.public_assistance,
                r.weeks_worked,
                r.usual_hours,
                r.hours_last_week,
                u8::from(r.in_labor_force),
                r.max_monthly_hours,
                r.imputed.join("|"),
                r.survey_weight,
            )
            .map_err(io)?;
            for v in &r.outcomes {
                if v.is_nan() {
                    write!(out, ",").map_err(io)?;
                } else {
                    write!(out, ",{v}").map_err(io)?;
                }
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}
