//! Rule-file reading and writing.
//!
//! A rule directory holds one UTF-8, comma-delimited file per parameter
//! family. Every file starts with the schema line `#simelig-rules v1`
//! followed by a header row. Unknown columns are rejected.
//!
//! | file | key | columns |
//! |------|-----|---------|
//! | `flags.csv` (required) | state, year | `afdc_up,ribicoff,medically_needy,schip_separate,targeted_medicaid` (0/1); optional `medically_needy_limit`, `region`, `ribicoff_mandate_max_age`, `ribicoff_mandate_birth_cutoff` |
//! | `afdc_params.csv` (required) | state, year, family_size | `needs_standard,payment_standard,gross_income_limit_pct,flat_disregard,work_expense_deduction`; optional `disregard_schedule` |
//! | `frozen_1931.csv` | state, family_size | same columns as `afdc_params.csv`; `year` is the snapshot year |
//! | `expansions.csv` | state, year, source, min_age, max_age | `fpl_multiple`; optional `birthdate_cutoff` |
//! | `schip.csv` | state, year | `work_expense_deduction` |
//! | `pregnancy.csv` | state, year | `fpl_multiple` |
//! | `poverty_guidelines.csv` (required) | year, region, family_size | `amount` (annual) |
//!
//! Money is in dollars with at most two decimals, monthly except for the
//! poverty guidelines. A disregard schedule is a `;`-separated list of
//! `months_worked_limit:flat_amount:fraction` rows (for example
//! `4:30:1/3;12:30:0`); the first row whose limit is at least the months
//! worked applies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::types::*;
use super::{RulesError, Violation};
use crate::units::{CalDate, Cents, Ratio, StateId};

pub const RULES_HEADER: &str = "#simelig-rules v1";

pub const FLAGS_FILE: &str = "flags.csv";
pub const AFDC_FILE: &str = "afdc_params.csv";
pub const FROZEN_FILE: &str = "frozen_1931.csv";
pub const EXPANSIONS_FILE: &str = "expansions.csv";
pub const SCHIP_FILE: &str = "schip.csv";
pub const PREGNANCY_FILE: &str = "pregnancy.csv";
pub const GUIDELINES_FILE: &str = "poverty_guidelines.csv";

const FLAGS_REQ: &[&str] = &["state", "year", "afdc_up", "ribicoff", "medically_needy", "schip_separate", "targeted_medicaid"];
const FLAGS_OPT: &[&str] = &["medically_needy_limit", "region", "ribicoff_mandate_max_age", "ribicoff_mandate_birth_cutoff"];
const AFDC_REQ: &[&str] = &[
    "state",
    "year",
    "family_size",
    "needs_standard",
    "payment_standard",
    "gross_income_limit_pct",
    "flat_disregard",
    "work_expense_deduction",
];
const AFDC_OPT: &[&str] = &["disregard_schedule"];
const EXP_REQ: &[&str] = &["state", "year", "source", "min_age", "max_age", "fpl_multiple"];
const EXP_OPT: &[&str] = &["birthdate_cutoff"];
const SCHIP_REQ: &[&str] = &["state", "year", "work_expense_deduction"];
const PREG_REQ: &[&str] = &["state", "year", "fpl_multiple"];
const GUIDE_REQ: &[&str] = &["year", "region", "family_size", "amount"];

struct Table {
    file: String,
    columns: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

struct Row<'a> {
    table: &'a Table,
    line: usize,
    values: &'a [String],
}

impl<'a> Row<'a> {
    fn raw(&self, name: &str) -> &'a str {
        match self.table.columns.iter().position(|c| c == name) {
            Some(i) => self.values[i].as_str(),
            None => "",
        }
    }

    fn err(&self, message: String) -> RulesError {
        RulesError::Parse { file: self.table.file.clone(), line: self.line, message }
    }

    fn parse<T: FromStr>(&self, name: &str) -> Result<T, RulesError>
    where
        T::Err: Display,
    {
        let raw = self.raw(name);
        if raw.is_empty() {
            return Err(self.err(format!("column `{name}` is empty")));
        }
        raw.parse().map_err(|e| self.err(format!("column `{name}`: {e} ({raw:?})")))
    }

    fn parse_opt<T: FromStr>(&self, name: &str) -> Result<Option<T>, RulesError>
    where
        T::Err: Display,
    {
        if self.raw(name).is_empty() {
            Ok(None)
        } else {
            self.parse(name).map(Some)
        }
    }

    fn flag(&self, name: &str) -> Result<bool, RulesError> {
        match self.raw(name) {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(self.err(format!("column `{name}`: expected 0/1, found {other:?}"))),
        }
    }
}

impl Table {
    fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, values)| Row { table: self, line: *line, values })
    }
}

fn read_table(dir: &Path, name: &str, required: &[&str], optional: &[&str], must_exist: bool) -> Result<Option<Table>, RulesError> {
    let path = dir.join(name);
    if !path.exists() && !must_exist {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|source| RulesError::Io { path: path.clone(), source })?;
    parse_table(name, &text, required, optional).map(Some)
}

fn parse_table(file: &str, text: &str, required: &[&str], optional: &[&str]) -> Result<Table, RulesError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.trim().is_empty() {
        return Err(RulesError::Empty { file: file.to_string() });
    }
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim() != RULES_HEADER {
        return Err(RulesError::BadHeader { file: file.to_string(), expected: RULES_HEADER, found: first.trim().to_string() });
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rest.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| RulesError::Parse { file: file.to_string(), line: 2, message: e.to_string() })?
        .clone();
    let columns: Vec<String> = headers.iter().map(str::to_string).collect();
    for c in &columns {
        if !required.contains(&c.as_str()) && !optional.contains(&c.as_str()) {
            return Err(RulesError::UnknownColumn { file: file.to_string(), column: c.clone() });
        }
    }
    let mut seen = BTreeSet::new();
    for c in &columns {
        if !seen.insert(c) {
            return Err(RulesError::Parse { file: file.to_string(), line: 2, message: format!("column `{c}` repeated") });
        }
    }
    for r in required {
        if !columns.iter().any(|c| c == r) {
            return Err(RulesError::MissingColumn { file: file.to_string(), column: r.to_string() });
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize + 1).unwrap_or(0);
            RulesError::Parse { file: file.to_string(), line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { file: file.to_string(), columns, rows })
}

struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, file: &str, line: Option<usize>, key: String, field: &str, message: impl Into<String>) {
        self.violations.push(Violation { file: file.to_string(), line, key, field: field.to_string(), message: message.into() });
    }
}

struct AfdcRow {
    line: usize,
    needs: Cents,
    payment: Cents,
    gross_pct: u32,
    flat: Cents,
    schedule: Vec<DisregardRule>,
    schedule_raw: String,
    wed: Cents,
}

fn afdc_row(row: &Row<'_>) -> Result<AfdcRow, RulesError> {
    let schedule_raw = row.raw("disregard_schedule").to_string();
    let schedule = DisregardRule::parse_schedule(&schedule_raw).map_err(|m| row.err(format!("column `disregard_schedule`: {m}")))?;
    Ok(AfdcRow {
        line: row.line,
        needs: row.parse("needs_standard")?,
        payment: row.parse("payment_standard")?,
        gross_pct: row.parse("gross_income_limit_pct")?,
        flat: row.parse("flat_disregard")?,
        schedule,
        schedule_raw,
        wed: row.parse("work_expense_deduction")?,
    })
}

/// Assembles per-size rows into one parameter block, recording violations.
fn assemble_afdc(file: &str, key: &str, rows: &BTreeMap<u32, AfdcRow>, out: &mut Collector) -> Option<AfdcParams> {
    let first = rows.values().next()?;
    let mut ok = true;
    for (i, (size, r)) in rows.iter().enumerate() {
        if *size != i as u32 + 1 {
            out.push(file, Some(r.line), key.to_string(), "family_size", format!("family sizes must run 1..max without gaps; found {size} at position {}", i + 1));
            ok = false;
        }
        if r.gross_pct < 100 {
            out.push(file, Some(r.line), key.to_string(), "gross_income_limit_pct", format!("must be at least 100, found {}", r.gross_pct));
            ok = false;
        }
        for (field, v) in [("needs_standard", r.needs), ("payment_standard", r.payment), ("flat_disregard", r.flat), ("work_expense_deduction", r.wed)] {
            if v.0 < 0 {
                out.push(file, Some(r.line), key.to_string(), field, "must be non-negative");
                ok = false;
            }
        }
        if r.schedule.iter().any(|d| d.flat_amount.0 < 0) {
            out.push(file, Some(r.line), key.to_string(), "disregard_schedule", "amounts must be non-negative");
            ok = false;
        }
        if r.schedule.windows(2).any(|w| w[0].months_worked_limit > w[1].months_worked_limit) {
            out.push(file, Some(r.line), key.to_string(), "disregard_schedule", "rows must be ordered by months limit");
            ok = false;
        }
        if r.gross_pct != first.gross_pct || r.flat != first.flat || r.wed != first.wed || r.schedule_raw != first.schedule_raw {
            out.push(file, Some(r.line), key.to_string(), "gross_income_limit_pct", "non-size-specific columns must agree across family sizes");
            ok = false;
        }
    }
    ok.then(|| AfdcParams {
        needs_standard: rows.values().map(|r| r.needs).collect(),
        payment_standard: rows.values().map(|r| r.payment).collect(),
        gross_income_limit_pct: first.gross_pct,
        flat_disregard: first.flat,
        earnings_disregards: first.schedule.clone(),
        work_expense_deduction: first.wed,
    })
}

struct FlagsRow {
    line: usize,
    flags: ProgramFlags,
    region: GuidelineRegion,
    mn_limit: Option<Ratio>,
    mandate: Option<RibicoffMandate>,
}

/// Loads and validates every rule file under `dir`.
pub fn load_rules(dir: &Path) -> Result<RuleSet, RulesError> {
    let mut out = Collector { violations: Vec::new() };

    let flags_t = read_table(dir, FLAGS_FILE, FLAGS_REQ, FLAGS_OPT, true)?.expect("required");
    let mut flags: BTreeMap<(StateId, i32), FlagsRow> = BTreeMap::new();
    for row in flags_t.rows() {
        let state = StateId(row.parse::<String>("state")?);
        let year: i32 = row.parse("year")?;
        let region = row.raw("region").parse::<GuidelineRegion>().map_err(|m| row.err(format!("column `region`: {m}")))?;
        let mandate = match row.parse_opt::<u32>("ribicoff_mandate_max_age")? {
            Some(max_age) => Some(RibicoffMandate { max_age, birthdate_cutoff: row.parse_opt::<CalDate>("ribicoff_mandate_birth_cutoff")? }),
            None => None,
        };
        let entry = FlagsRow {
            line: row.line,
            flags: ProgramFlags {
                afdc_up: row.flag("afdc_up")?,
                ribicoff: row.flag("ribicoff")?,
                medically_needy: row.flag("medically_needy")?,
                schip_separate: row.flag("schip_separate")?,
                targeted_medicaid: row.flag("targeted_medicaid")?,
            },
            region,
            mn_limit: row.parse_opt("medically_needy_limit")?,
            mandate,
        };
        let key = (state, year);
        if flags.contains_key(&key) {
            return Err(RulesError::DuplicateKey { file: FLAGS_FILE.into(), line: row.line, key: format!("({}, {})", key.0, key.1) });
        }
        flags.insert(key, entry);
    }

    let afdc_t = read_table(dir, AFDC_FILE, AFDC_REQ, AFDC_OPT, true)?.expect("required");
    let mut afdc_rows: BTreeMap<(StateId, i32), BTreeMap<u32, AfdcRow>> = BTreeMap::new();
    for row in afdc_t.rows() {
        let key = (StateId(row.parse::<String>("state")?), row.parse::<i32>("year")?);
        let size: u32 = row.parse("family_size")?;
        let parsed = afdc_row(&row)?;
        let sizes = afdc_rows.entry(key.clone()).or_default();
        if sizes.contains_key(&size) {
            return Err(RulesError::DuplicateKey { file: AFDC_FILE.into(), line: row.line, key: format!("({}, {}, size {size})", key.0, key.1) });
        }
        sizes.insert(size, parsed);
    }

    let mut frozen_rows: BTreeMap<StateId, (i32, BTreeMap<u32, AfdcRow>)> = BTreeMap::new();
    if let Some(t) = read_table(dir, FROZEN_FILE, AFDC_REQ, AFDC_OPT, false)? {
        for row in t.rows() {
            let state = StateId(row.parse::<String>("state")?);
            let year: i32 = row.parse("year")?;
            let size: u32 = row.parse("family_size")?;
            let parsed = afdc_row(&row)?;
            let entry = frozen_rows.entry(state.clone()).or_insert_with(|| (year, BTreeMap::new()));
            if entry.0 != year {
                out.push(FROZEN_FILE, Some(row.line), state.to_string(), "year", "one snapshot year per state");
            }
            if entry.1.contains_key(&size) {
                return Err(RulesError::DuplicateKey { file: FROZEN_FILE.into(), line: row.line, key: format!("({state}, size {size})") });
            }
            entry.1.insert(size, parsed);
        }
    }

    let mut expansions: BTreeMap<(StateId, i32), Vec<ExpansionThreshold>> = BTreeMap::new();
    if let Some(t) = read_table(dir, EXPANSIONS_FILE, EXP_REQ, EXP_OPT, false)? {
        let mut keys = BTreeSet::new();
        for row in t.rows() {
            let state = StateId(row.parse::<String>("state")?);
            let year: i32 = row.parse("year")?;
            let source = row.parse::<ThresholdSource>("source")?;
            let exp = ExpansionThreshold {
                min_age: row.parse("min_age")?,
                max_age: row.parse("max_age")?,
                fpl_multiple: row.parse("fpl_multiple")?,
                birthdate_cutoff: row.parse_opt("birthdate_cutoff")?,
                source,
            };
            let k = format!("({state}, {year}, {}, {}-{})", source.as_str(), exp.min_age, exp.max_age);
            if !keys.insert(k.clone()) {
                return Err(RulesError::DuplicateKey { file: EXPANSIONS_FILE.into(), line: row.line, key: k });
            }
            if exp.min_age > exp.max_age || exp.max_age > 18 {
                out.push(EXPANSIONS_FILE, Some(row.line), k.clone(), "max_age", "need 0 <= min_age <= max_age <= 18");
            }
            if exp.fpl_multiple.0 == 0 {
                out.push(EXPANSIONS_FILE, Some(row.line), k.clone(), "fpl_multiple", "must be positive");
            }
            if !flags.contains_key(&(state.clone(), year)) {
                out.push(EXPANSIONS_FILE, Some(row.line), k, "state", "no matching vintage in flags.csv");
            }
            expansions.entry((state, year)).or_default().push(exp);
        }
    }

    let mut schip: BTreeMap<(StateId, i32), SchipParams> = BTreeMap::new();
    if let Some(t) = read_table(dir, SCHIP_FILE, SCHIP_REQ, &[], false)? {
        for row in t.rows() {
            let key = (StateId(row.parse::<String>("state")?), row.parse::<i32>("year")?);
            let wed: Cents = row.parse("work_expense_deduction")?;
            if wed.0 < 0 {
                out.push(SCHIP_FILE, Some(row.line), format!("({}, {})", key.0, key.1), "work_expense_deduction", "must be non-negative");
            }
            if schip.insert(key.clone(), SchipParams { work_expense_deduction: wed }).is_some() {
                return Err(RulesError::DuplicateKey { file: SCHIP_FILE.into(), line: row.line, key: format!("({}, {})", key.0, key.1) });
            }
        }
    }

    let mut pregnancy: BTreeMap<(StateId, i32), Ratio> = BTreeMap::new();
    if let Some(t) = read_table(dir, PREGNANCY_FILE, PREG_REQ, &[], false)? {
        for row in t.rows() {
            let key = (StateId(row.parse::<String>("state")?), row.parse::<i32>("year")?);
            if pregnancy.insert(key.clone(), row.parse("fpl_multiple")?).is_some() {
                return Err(RulesError::DuplicateKey { file: PREGNANCY_FILE.into(), line: row.line, key: format!("({}, {})", key.0, key.1) });
            }
        }
    }

    let guide_t = read_table(dir, GUIDELINES_FILE, GUIDE_REQ, &[], true)?.expect("required");
    let mut guide_rows: BTreeMap<(i32, GuidelineRegion), BTreeMap<u32, (usize, Cents)>> = BTreeMap::new();
    for row in guide_t.rows() {
        let year: i32 = row.parse("year")?;
        let region = row.raw("region").parse::<GuidelineRegion>().map_err(|m| row.err(format!("column `region`: {m}")))?;
        let size: u32 = row.parse("family_size")?;
        let amount: Cents = row.parse("amount")?;
        if guide_rows.entry((year, region)).or_default().insert(size, (row.line, amount)).is_some() {
            return Err(RulesError::DuplicateKey { file: GUIDELINES_FILE.into(), line: row.line, key: format!("({year}, {region}, size {size})") });
        }
    }
    let mut guidelines = PovertyGuidelineTable::default();
    for ((year, region), sizes) in guide_rows {
        let key = format!("({year}, {region})");
        let mut prev: Option<Cents> = None;
        let mut ok = true;
        for (i, (size, (line, amount))) in sizes.iter().enumerate() {
            if *size != i as u32 + 1 {
                out.push(GUIDELINES_FILE, Some(*line), key.clone(), "family_size", "sizes must run 1..max without gaps");
                ok = false;
            }
            if amount.0 <= 0 || prev.is_some_and(|p| *amount <= p) {
                out.push(GUIDELINES_FILE, Some(*line), key.clone(), "amount", "must be positive and strictly increasing in family size");
                ok = false;
            }
            prev = Some(*amount);
        }
        if ok {
            guidelines.amounts.insert((year, region), sizes.values().map(|(_, a)| *a).collect());
        }
    }

    let mut frozen: BTreeMap<StateId, AfdcParams> = BTreeMap::new();
    for (state, (year, rows)) in &frozen_rows {
        if let Some(p) = assemble_afdc(FROZEN_FILE, &format!("({state}, {year})"), rows, &mut out) {
            frozen.insert(state.clone(), p);
        }
    }

    for (key, sizes) in &afdc_rows {
        if !flags.contains_key(key) {
            let line = sizes.values().next().map(|r| r.line);
            out.push(AFDC_FILE, line, format!("({}, {})", key.0, key.1), "state", "no matching vintage in flags.csv");
        }
    }
    for key in schip.keys().chain(pregnancy.keys()) {
        if !flags.contains_key(key) {
            out.push(SCHIP_FILE, None, format!("({}, {})", key.0, key.1), "state", "no matching vintage in flags.csv");
        }
    }

    let mut vintages = BTreeMap::new();
    for (key, f) in &flags {
        let label = format!("({}, {})", key.0, key.1);
        if let Some(limit) = f.mn_limit {
            if limit > MEDICALLY_NEEDY_CAP {
                out.push(FLAGS_FILE, Some(f.line), label.clone(), "medically_needy_limit", format!("{limit} exceeds 1.33 times the needs standard"));
            }
        } else if f.flags.medically_needy {
            out.push(FLAGS_FILE, Some(f.line), label.clone(), "medically_needy_limit", "required when medically_needy = 1");
        }
        if f.flags.schip_separate && !schip.contains_key(key) {
            out.push(FLAGS_FILE, Some(f.line), label.clone(), "schip_separate", "flag set but no schip.csv row");
        }
        let Some(sizes) = afdc_rows.get(key) else {
            out.push(FLAGS_FILE, Some(f.line), label, "afdc_params", "no afdc_params.csv rows for this vintage");
            continue;
        };
        let Some(afdc) = assemble_afdc(AFDC_FILE, &label, sizes, &mut out) else { continue };
        let post_prwora = key.1 >= FIRST_POST_PRWORA_YEAR;
        vintages.insert(
            key.clone(),
            RuleVintage {
                state: key.0.clone(),
                year: key.1,
                region: f.region,
                afdc,
                flags: f.flags,
                expansions: expansions.get(key).cloned().unwrap_or_default(),
                schip: schip.get(key).copied(),
                medically_needy_limit: f.mn_limit,
                ribicoff_mandate: f.mandate,
                frozen_1931: if post_prwora { frozen.get(&key.0).cloned() } else { None },
                post_prwora,
                pregnancy_limit: pregnancy.get(key).copied(),
            },
        );
    }

    if out.violations.is_empty() {
        Ok(RuleSet { vintages, guidelines })
    } else {
        Err(RulesError::Invariant { violations: out.violations })
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn write_file(dir: &Path, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), RulesError> {
    let mut text = String::new();
    text.push_str(RULES_HEADER);
    text.push('\n');
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let io_err = |e: csv::Error| RulesError::Io { path: dir.join(name), source: std::io::Error::other(e.to_string()) };
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| RulesError::Io { path: dir.join(name), source: std::io::Error::other(e.to_string()) })?;
    text.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| RulesError::Io { path, source })
}

fn afdc_rows_out(state: &StateId, year: i32, p: &AfdcParams) -> Vec<Vec<String>> {
    (0..p.needs_standard.len())
        .map(|i| {
            vec![
                state.to_string(),
                year.to_string(),
                (i + 1).to_string(),
                p.needs_standard[i].to_string(),
                p.payment_standard[i].to_string(),
                p.gross_income_limit_pct.to_string(),
                p.flat_disregard.to_string(),
                p.work_expense_deduction.to_string(),
                DisregardRule::format_schedule(&p.earnings_disregards),
            ]
        })
        .collect()
}

/// Writes `rules` as a rule directory that [`load_rules`] reads back
/// unchanged. Frozen rules are written with snapshot year 1996.
pub fn write_rules(dir: &Path, rules: &RuleSet) -> Result<(), RulesError> {
    fs::create_dir_all(dir).map_err(|source| RulesError::Io { path: dir.to_path_buf(), source })?;
    let mut flags = Vec::new();
    let mut afdc = Vec::new();
    let mut exps = Vec::new();
    let mut schip = Vec::new();
    let mut preg = Vec::new();
    let mut frozen: BTreeMap<StateId, &AfdcParams> = BTreeMap::new();
    for v in rules.vintages.values() {
        flags.push(vec![
            v.state.to_string(),
            v.year.to_string(),
            flag(v.flags.afdc_up).into(),
            flag(v.flags.ribicoff).into(),
            flag(v.flags.medically_needy).into(),
            flag(v.flags.schip_separate).into(),
            flag(v.flags.targeted_medicaid).into(),
            v.medically_needy_limit.map(|r| r.to_string()).unwrap_or_default(),
            v.region.as_str().into(),
            v.ribicoff_mandate.map(|m| m.max_age.to_string()).unwrap_or_default(),
            v.ribicoff_mandate.and_then(|m| m.birthdate_cutoff).map(|d| d.to_string()).unwrap_or_default(),
        ]);
        afdc.extend(afdc_rows_out(&v.state, v.year, &v.afdc));
        for e in &v.expansions {
            exps.push(vec![
                v.state.to_string(),
                v.year.to_string(),
                e.source.as_str().into(),
                e.min_age.to_string(),
                e.max_age.to_string(),
                e.fpl_multiple.to_string(),
                e.birthdate_cutoff.map(|d| d.to_string()).unwrap_or_default(),
            ]);
        }
        if let Some(s) = v.schip {
            schip.push(vec![v.state.to_string(), v.year.to_string(), s.work_expense_deduction.to_string()]);
        }
        if let Some(p) = v.pregnancy_limit {
            preg.push(vec![v.state.to_string(), v.year.to_string(), p.to_string()]);
        }
        if let Some(f) = &v.frozen_1931 {
            frozen.entry(v.state.clone()).or_insert(f);
        }
    }
    let mut flags_header = FLAGS_REQ.to_vec();
    flags_header.extend_from_slice(FLAGS_OPT);
    write_file(dir, FLAGS_FILE, &flags_header, flags)?;
    let mut afdc_header = AFDC_REQ.to_vec();
    afdc_header.extend_from_slice(AFDC_OPT);
    write_file(dir, AFDC_FILE, &afdc_header, afdc)?;
    let frozen_rows = frozen.iter().flat_map(|(s, p)| afdc_rows_out(s, 1996, p)).collect();
    write_file(dir, FROZEN_FILE, &afdc_header, frozen_rows)?;
    let mut exp_header = EXP_REQ.to_vec();
    exp_header.extend_from_slice(EXP_OPT);
    write_file(dir, EXPANSIONS_FILE, &exp_header, exps)?;
    write_file(dir, SCHIP_FILE, SCHIP_REQ, schip)?;
    write_file(dir, PREGNANCY_FILE, PREG_REQ, preg)?;
    let guides = rules
        .guidelines
        .amounts
        .iter()
        .flat_map(|((year, region), sizes)| {
            sizes
                .iter()
                .enumerate()
                .map(move |(i, a)| vec![year.to_string(), region.as_str().to_string(), (i + 1).to_string(), a.to_string()])
        })
        .collect();
    write_file(dir, GUIDELINES_FILE, GUIDE_REQ, guides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_required() {
        let err = parse_table("x.csv", "state,year\nA,1\n", &["state", "year"], &[]).err().unwrap();
        assert!(matches!(err, RulesError::BadHeader { .. }));
    }

    #[test]
    fn unknown_and_missing_columns() {
        let text = format!("{RULES_HEADER}\nstate,year,colour\nA,1,red\n");
        assert!(matches!(parse_table("x.csv", &text, &["state", "year"], &[]), Err(RulesError::UnknownColumn { .. })));
        let text = format!("{RULES_HEADER}\nstate\nA\n");
        assert!(matches!(parse_table("x.csv", &text, &["state", "year"], &[]), Err(RulesError::MissingColumn { .. })));
    }

    #[test]
    fn line_numbers_count_the_schema_line() {
        let text = format!("{RULES_HEADER}\nstate,year\nA,1\nB,2\n");
        let t = parse_table("x.csv", &text, &["state", "year"], &[]).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_table("x.csv", "", &["state"], &[]), Err(RulesError::Empty { .. })));
    }
}
