//! Batch stages. Each stage reads files, writes files and a manifest
//! (`manifest_<stage>.json`) into its output directory; nothing is passed
//! in memory between stages.
//!
//! | stage        | reads                                   | writes |
//! |--------------|-----------------------------------------|--------|
//! | `rules synth`| -                                       | rule files |
//! | `gen`        | DGP config, rules                       | `population.csv`, `state_panel.csv` |
//! | `impute`     | population, rules, optional state panel | `families.csv`, `children.csv`, `women.csv`, `drop_ledger.csv` |
//! | `instrument` | impute outputs, rules, optional index   | `sim_table.csv`, `family_simt.csv`, `analysis.csv` |
//! | `estimate`   | analysis data, regression spec          | `coefficients.csv`, `fit.json`, `sample_ledger.csv`, ... |
//! | `report`     | report config, fits                     | `tot.csv`, `elasticity.csv`, `fiscal.csv`, `summary.txt` |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{
    remaining_variation, threshold_regressions, write_sample_ledger, AbsorbOptions, EstimationError, FitResult, Frame, RegressionSpec,
};
use crate::instrument::{
    family_simt, fixed_eligibility_inputs, maternal_sim_eligibility, rules_sim_table, write_family_simt, write_sim_table, CellKey,
    DonorFamily, FamilySimtRow, IncomeInflator, InstrumentError, MaternalMode, SimTable, Variant, WomanRecord,
};
use crate::manifest::RunManifest;
use crate::policy_rules::synth::{synthetic_rules, SynthRulesConfig};
use crate::policy_rules::{evaluate_year, load_rules, write_rules, ChildView, FamilyView, ReferencePeriod, RuleSet, RulesError};
use crate::population::{
    birth_month, build_nuclear_families, generate_state_panel, generate_synthetic_population, reweight_cells, CellKey as ReweightCell,
    DgpConfig, MaritalStatus, NuclearFamily, PersonRecord, Population, PopulationError, Sex, StatePanelRow,
};
use crate::postanalysis::{
    delta_simt, fiscal_balance, itt_to_tot, summary_text, takeup_elasticity, FiscalInputs, FiscalLedger, PostError, TakeUpEstimate,
    TotResult,
};
use crate::units::{Cents, StateId, YearMonth};

pub const POPULATION_FILE: &str = "population.csv";
pub const STATE_PANEL_FILE: &str = "state_panel.csv";
pub const FAMILIES_FILE: &str = "families.csv";
pub const CHILDREN_FILE: &str = "children.csv";
pub const WOMEN_FILE: &str = "women.csv";
pub const DROP_LEDGER_FILE: &str = "drop_ledger.csv";
pub const SIM_TABLE_FILE: &str = "sim_table.csv";
pub const MATERNAL_TABLE_FILE: &str = "maternal_sim_table.csv";
pub const FAMILY_SIMT_FILE: &str = "family_simt.csv";
pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";
pub const FIT_FILE: &str = "fit.json";
pub const SAMPLE_LEDGER_FILE: &str = "sample_ledger.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const REMAINING_FILE: &str = "remaining_variation.csv";

/// Columns of the state panel joined onto families as state controls.
pub const STATE_CONTROLS: [&str; 4] = ["unemployment", "min_wage", "max_benefit", "eitc"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Post(#[from] PostError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
}

impl PipelineError {
    /// 1 for failed validation, 2 for I/O and schema problems.
    pub fn exit_code(&self) -> i32 {
        use PipelineError as P;
        match self {
            P::Io { .. } | P::Config { .. } | P::Schema { .. } => 2,
            P::Rules(e) => match e {
                RulesError::Io { .. }
                | RulesError::Empty { .. }
                | RulesError::BadHeader { .. }
                | RulesError::Parse { .. }
                | RulesError::MissingColumn { .. }
                | RulesError::UnknownColumn { .. }
                | RulesError::DuplicateKey { .. } => 2,
                _ => 1,
            },
            P::Population(e) => match e {
                PopulationError::Io { .. } | PopulationError::Csv { .. } | PopulationError::MissingColumn { .. } | PopulationError::BadValue { .. } => 2,
                PopulationError::Rules(_) | _ => 1,
            },
            P::Instrument(e) => match e {
                InstrumentError::Io { .. }
                | InstrumentError::Parse { .. }
                | InstrumentError::MissingColumn { .. }
                | InstrumentError::MissingInput(_)
                | InstrumentError::MissingIndex { .. }
                | InstrumentError::MissingRegion(_) => 2,
                _ => 1,
            },
            P::Estimation(e) => match e {
                EstimationError::Io { .. } | EstimationError::MissingColumn(_) | EstimationError::NotNumeric(_) | EstimationError::Spec(_) => 2,
                _ => 1,
            },
            P::Post(_) => 1,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn finish(mut m: RunManifest, out: &Path, outputs: &[&str]) -> Result<RunManifest, PipelineError> {
    for name in outputs {
        let p = out.join(name);
        m.add_output(&p).map_err(|e| io_err(&p, e))?;
    }
    let path = out.join(format!("manifest_{}.json", m.command.replace(' ', "_")));
    m.write(&path).map_err(|e| io_err(&path, e))?;
    Ok(m)
}

fn add_input(m: &mut RunManifest, path: &Path) -> Result<(), PipelineError> {
    m.add_input(path).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, PipelineError> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .map(|row| {
            row.map_err(|e| PipelineError::Schema {
                file: file.clone(),
                message: match e.position() {
                    Some(p) => format!("line {}: {e}", p.line()),
                    None => e.to_string(),
                },
            })
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

/// Invariant check of a rules directory, one line per vintage.
#[derive(Debug, Clone, PartialEq)]
pub struct RulesReport {
    pub lines: Vec<String>,
    pub ok: bool,
}

pub fn rules_validate(dir: &Path) -> Result<RulesReport, PipelineError> {
    match load_rules(dir) {
        Ok(rules) => {
            let mut lines: Vec<String> = rules.vintages.keys().map(|(s, y)| format!("{s} {y}: ok")).collect();
            lines.push(format!("{} vintages, {} guideline rows: ok", rules.vintages.len(), rules.guidelines.amounts.len()));
            Ok(RulesReport { lines, ok: true })
        }
        Err(RulesError::Invariant { violations }) => Ok(RulesReport { lines: violations.iter().map(|v| format!("violation: {v}")).collect(), ok: false }),
        Err(e) => Err(e.into()),
    }
}

pub fn rules_synth(cfg: &SynthRulesConfig, out: &Path) -> Result<RunManifest, PipelineError> {
    create_dir(out)?;
    let rules = synthetic_rules(cfg);
    write_rules(out, &rules)?;
    let mut m = RunManifest::new("rules synth", Some(cfg.seed));
    m.note("states", cfg.n_states);
    m.note("years", [cfg.first_year, cfg.last_year]);
    m.rows_out.insert("vintages".into(), rules.vintages.len() as u64);
    let mut files: Vec<String> = fs::read_dir(out)
        .map_err(|e| io_err(out, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    finish(m, out, &names)
}

pub fn read_dgp_config(path: &Path) -> Result<DgpConfig, PipelineError> {
    toml::from_str(&read_text(path)?).map_err(|e| PipelineError::Config { path: path.to_path_buf(), message: e.to_string() })
}

/// Synthetic population and state panel. The global seed is `seed` when
/// given, else the config's own.
pub fn run_gen(config: &Path, rules_dir: &Path, seed: Option<u64>, out: &Path) -> Result<RunManifest, PipelineError> {
    let cfg = read_dgp_config(config)?;
    gen_from_config(&cfg, Some(config), rules_dir, seed, out)
}

pub fn gen_from_config(cfg: &DgpConfig, config_path: Option<&Path>, rules_dir: &Path, seed: Option<u64>, out: &Path) -> Result<RunManifest, PipelineError> {
    create_dir(out)?;
    let seed = seed.unwrap_or(cfg.seed);
    let mut m = RunManifest::new("gen", Some(seed));
    let stage_seed = m.stage_seed.expect("seed given");
    match config_path {
        Some(p) => m.config_digest = Some(crate::manifest::sha256_bytes(read_text(p)?.as_bytes())),
        None => m.config_digest = Some(crate::manifest::sha256_bytes(toml::to_string(cfg).unwrap_or_default().as_bytes())),
    }
    m.add_input_dir(rules_dir).map_err(|e| io_err(rules_dir, e))?;
    let rules = load_rules(rules_dir)?;
    let pop = generate_synthetic_population(cfg, &rules, stage_seed)?;
    pop.write_csv(&out.join(POPULATION_FILE))?;
    let panel = generate_state_panel(&rules, stage_seed);
    write_rows(&out.join(STATE_PANEL_FILE), &panel)?;
    m.rows_out.insert(POPULATION_FILE.into(), pop.records.len() as u64);
    m.rows_out.insert(STATE_PANEL_FILE.into(), panel.len() as u64);
    finish(m, out, &[POPULATION_FILE, STATE_PANEL_FILE])
}

/// One child of an analysis family with everything the rules need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildRow {
    pub family_id: u64,
    pub person_id: u64,
    pub state: String,
    pub year: i32,
    pub group: String,
    pub age: u32,
    pub weight: f64,
    pub birth_year: i32,
    pub birth_month: u8,
    pub head_or_spouse: u8,
    pub married: u8,
    pub family_size: u32,
    /// Cents.
    pub annual_income: i64,
    pub workers: u32,
    pub primary_earner_monthly_hours: u32,
    pub max_annual_hours: u32,
    /// Own-state eligibility measure for the reference period.
    pub eligibility: f64,
}

impl ChildRow {
    pub fn view(&self) -> FamilyView {
        FamilyView {
            married: self.married == 1,
            family_size: self.family_size,
            annual_income: Cents(self.annual_income),
            workers: self.workers,
            primary_earner_monthly_hours: self.primary_earner_monthly_hours,
            max_annual_hours: self.max_annual_hours,
        }
    }

    pub fn child(&self) -> ChildView {
        ChildView { id: self.person_id, birth: YearMonth::new(self.birth_year, self.birth_month), head_or_spouse: self.head_or_spouse == 1 }
    }
}

/// A woman of reproductive age with the unit her eligibility is judged on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WomanRow {
    pub person_id: u64,
    pub state: String,
    pub year: i32,
    pub race: String,
    pub age: u32,
    pub weight: f64,
    pub infant_mother: u8,
    pub married: u8,
    pub family_size: u32,
    pub annual_income: i64,
    pub workers: u32,
    pub primary_earner_monthly_hours: u32,
    pub max_annual_hours: u32,
}

impl WomanRow {
    pub fn record(&self) -> WomanRecord {
        WomanRecord {
            person_id: self.person_id,
            state: StateId(self.state.clone()),
            year: self.year,
            race: self.race.clone(),
            age: self.age,
            view: FamilyView {
                married: self.married == 1,
                family_size: self.family_size,
                annual_income: Cents(self.annual_income),
                workers: self.workers,
                primary_earner_monthly_hours: self.primary_earner_monthly_hours,
                max_annual_hours: self.max_annual_hours,
            },
            weight: self.weight,
            infant_mother: self.infant_mother == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeOptions {
    pub reference: ReferencePeriod,
    /// Zero the weight of mothers with an imputed outcome and reweight the
    /// rest by state, year and marital status.
    pub drop_imputed: bool,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions { reference: ReferencePeriod::LastYear, drop_imputed: true }
    }
}

fn group_of(married: bool) -> &'static str {
    if married {
        "married"
    } else {
        "single"
    }
}

/// Unit for a woman who heads no analysis family: herself and a spouse if
/// one is recorded.
fn own_unit(r: &PersonRecord, by_id: &HashMap<u64, &PersonRecord>) -> FamilyView {
    let spouse = r.spouse_id.and_then(|s| by_id.get(&s).copied()).filter(|s| s.household_id == r.household_id);
    let members: Vec<&PersonRecord> = std::iter::once(r).chain(spouse).collect();
    let earnings = |p: &PersonRecord| p.earned_income + p.self_employment_income;
    let primary = members.iter().copied().fold(r, |best, p| if earnings(p) > earnings(best) { p } else { best });
    FamilyView {
        married: spouse.is_some(),
        family_size: members.len() as u32,
        annual_income: members.iter().map(|p| p.income_ex_welfare()).sum(),
        workers: members.iter().filter(|p| p.weeks_worked > 0).count() as u32,
        primary_earner_monthly_hours: primary.max_monthly_hours,
        max_annual_hours: members.iter().map(|p| p.annual_hours()).max().unwrap_or(0),
    }
}

fn read_state_panel(path: &Path) -> Result<BTreeMap<(String, i32), StatePanelRow>, PipelineError> {
    Ok(read_rows::<StatePanelRow>(path)?.into_iter().map(|r| ((r.state.clone(), r.year), r)).collect())
}

/// Links families, draws birth months, evaluates own-state eligibility and
/// writes the analysis, donor and women files.
pub fn run_impute(
    population: &Path,
    rules_dir: &Path,
    state_panel: Option<&Path>,
    seed: u64,
    opts: &ImputeOptions,
    out: &Path,
) -> Result<RunManifest, PipelineError> {
    create_dir(out)?;
    let mut m = RunManifest::new("impute", Some(seed));
    let stage_seed = m.stage_seed.expect("seed given");
    add_input(&mut m, population)?;
    m.add_input_dir(rules_dir).map_err(|e| io_err(rules_dir, e))?;
    let panel = match state_panel {
        Some(p) => {
            add_input(&mut m, p)?;
            Some(read_state_panel(p)?)
        }
        None => None,
    };
    m.note("reference", opts.reference);
    m.note("drop_imputed", opts.drop_imputed);
    let rules = load_rules(rules_dir)?;
    let pop = Population::read_csv(population)?;
    let records = &pop.records;
    let build = build_nuclear_families(records)?;
    build.write_ledger(&out.join(DROP_LEDGER_FILE)).map_err(|e| io_err(&out.join(DROP_LEDGER_FILE), e))?;
    let families = &build.families;

    // Analysis weights: the mother's survey weight, reweighted within
    // state × year × marital cells when imputed outcomes are dropped.
    let mother_weights: Vec<f64> = families.iter().map(|f| records[f.mother].survey_weight).collect();
    let weights = if opts.drop_imputed {
        let cells: Vec<ReweightCell> =
            families.iter().map(|f| ReweightCell { state: f.state.clone(), year: f.year, marital_status: f.marital_status }).collect();
        let dropped: Vec<bool> = families.iter().map(|f| pop.outcome_columns.iter().any(|c| records[f.mother].is_imputed(c))).collect();
        let rw = reweight_cells(&cells, &mother_weights, &dropped);
        m.note("imputed_dropped", rw.dropped);
        m.note("reweight_flagged_cells", rw.flagged_cells.len());
        rw.weights
    } else {
        mother_weights
    };

    let evaluated: Vec<(Vec<ChildRow>, f64)> = families
        .par_iter()
        .map(|f| child_rows(f, records, &rules, stage_seed, opts.reference))
        .collect::<Result<_, PipelineError>>()?;

    let fam_path = out.join(FAMILIES_FILE);
    let mut w = csv_writer(&fam_path)?;
    let mut header: Vec<String> = [
        "family_id",
        "household_id",
        "state",
        "year",
        "married",
        "n_children",
        "youngest_age",
        "oldest_age",
        "age_gap",
        "mother_age",
        "race",
        "weight",
        "eligible_children",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(pop.outcome_columns.iter().cloned());
    if panel.is_some() {
        header.extend(STATE_CONTROLS.iter().map(|s| s.to_string()));
    }
    w.write_record(&header).map_err(|e| io_err(&fam_path, e))?;
    for ((f, (_, eligible)), weight) in families.iter().zip(&evaluated).zip(&weights) {
        let mother = &records[f.mother];
        let ages: Vec<u32> = f.children.iter().map(|&c| records[c].age).collect();
        let (young, old) = (*ages.iter().min().expect("families have children"), *ages.iter().max().expect("families have children"));
        let mut row = vec![
            f.family_id.to_string(),
            f.household_id.to_string(),
            f.state.to_string(),
            f.year.to_string(),
            u8::from(f.married()).to_string(),
            ages.len().to_string(),
            young.to_string(),
            old.to_string(),
            (old - young).to_string(),
            mother.age.to_string(),
            mother.race_ethnicity.clone(),
            fmt_num(*weight),
            fmt_num(*eligible),
        ];
        row.extend(mother.outcomes.iter().map(|&v| fmt_num(v)));
        if let Some(panel) = &panel {
            match panel.get(&(f.state.to_string(), f.year)) {
                Some(p) => row.extend([p.unemployment, p.min_wage, p.max_benefit, p.eitc].map(fmt_num)),
                None => row.extend(std::iter::repeat_n(String::new(), STATE_CONTROLS.len())),
            }
        }
        w.write_record(&row).map_err(|e| io_err(&fam_path, e))?;
    }
    w.flush().map_err(|e| io_err(&fam_path, e))?;

    let children: Vec<ChildRow> = evaluated.into_iter().flat_map(|(c, _)| c).collect();
    write_rows(&out.join(CHILDREN_FILE), &children)?;

    let women = women_rows(records, families);
    write_rows(&out.join(WOMEN_FILE), &women)?;

    m.rows_in.insert(POPULATION_FILE.into(), records.len() as u64);
    m.rows_out.insert(FAMILIES_FILE.into(), families.len() as u64);
    m.rows_out.insert(CHILDREN_FILE.into(), children.len() as u64);
    m.rows_out.insert(WOMEN_FILE.into(), women.len() as u64);
    m.rows_out.insert(DROP_LEDGER_FILE.into(), build.ledger.len() as u64);
    m.note("dropped_persons", build.dropped_persons());
    finish(m, out, &[FAMILIES_FILE, CHILDREN_FILE, WOMEN_FILE, DROP_LEDGER_FILE])
}

fn child_rows(
    f: &NuclearFamily,
    records: &[PersonRecord],
    rules: &RuleSet,
    seed: u64,
    reference: ReferencePeriod,
) -> Result<(Vec<ChildRow>, f64), PipelineError> {
    let vintage = rules.vintage(&f.state, f.year)?;
    let view = f.view();
    let mut rows = Vec::with_capacity(f.children.len());
    let mut total = 0.0;
    for &c in &f.children {
        let r = &records[c];
        let child = f.child_view(records, c, birth_month(seed, r.person_id));
        let e = evaluate_year(&child, &view, vintage, &rules.guidelines, reference)?.measure(reference);
        total += e;
        rows.push(ChildRow {
            family_id: f.family_id,
            person_id: r.person_id,
            state: f.state.to_string(),
            year: f.year,
            group: group_of(f.married()).to_string(),
            age: r.age,
            weight: r.survey_weight,
            birth_year: child.birth.year,
            birth_month: child.birth.month,
            head_or_spouse: u8::from(child.head_or_spouse),
            married: u8::from(view.married),
            family_size: view.family_size,
            annual_income: view.annual_income.0,
            workers: view.workers,
            primary_earner_monthly_hours: view.primary_earner_monthly_hours,
            max_annual_hours: view.max_annual_hours,
            eligibility: e,
        });
    }
    Ok((rows, total))
}

fn women_rows(records: &[PersonRecord], families: &[NuclearFamily]) -> Vec<WomanRow> {
    use crate::instrument::maternal::{REPRODUCTIVE_MAX_AGE, REPRODUCTIVE_MIN_AGE};
    let by_id: HashMap<u64, &PersonRecord> = records.iter().map(|r| (r.person_id, r)).collect();
    let mothers: HashMap<u64, &NuclearFamily> = families.iter().map(|f| (f.family_id, f)).collect();
    let mut out: Vec<WomanRow> = records
        .iter()
        .filter(|r| r.sex == Sex::Female && (REPRODUCTIVE_MIN_AGE..=REPRODUCTIVE_MAX_AGE).contains(&r.age))
        .map(|r| {
            let (view, infant) = match mothers.get(&r.person_id) {
                Some(f) => (f.view(), f.children.iter().any(|&c| records[c].age == 0)),
                None => (own_unit(r, &by_id), false),
            };
            WomanRow {
                person_id: r.person_id,
                state: r.state.to_string(),
                year: r.year,
                race: r.race_ethnicity.clone(),
                age: r.age,
                weight: r.survey_weight,
                infant_mother: u8::from(infant),
                married: u8::from(view.married),
                family_size: view.family_size,
                annual_income: view.annual_income.0,
                workers: view.workers,
                primary_earner_monthly_hours: view.primary_earner_monthly_hours,
                max_annual_hours: view.max_annual_hours,
            }
        })
        .collect();
    out.sort_by_key(|w| w.person_id);
    out
}

/// Groups donor rows into families, keeping file order.
pub fn donor_families(children: &[ChildRow]) -> Vec<(u64, DonorFamily)> {
    let mut out: Vec<(u64, DonorFamily)> = Vec::new();
    for c in children {
        match out.last_mut() {
            Some((id, fam)) if *id == c.family_id => {
                fam.children.push(c.child());
                fam.ages.push(c.age);
                fam.weights.push(c.weight);
            }
            _ => out.push((
                c.family_id,
                DonorFamily {
                    state: StateId(c.state.clone()),
                    year: c.year,
                    group: c.group.clone(),
                    view: c.view(),
                    children: vec![c.child()],
                    ages: vec![c.age],
                    weights: vec![c.weight],
                },
            )),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentOptions {
    pub variant: Variant,
    /// Index series for the fixed variants.
    pub inflator: Option<PathBuf>,
    /// State-to-region map for the regional price variant.
    pub regions: Option<PathBuf>,
    /// Donor year for the fixed variants; the earliest year when unset.
    pub base_year: Option<i32>,
    pub reference: ReferencePeriod,
    pub leave_one_out: bool,
    /// Also build the pregnancy-rules table and a SIMT whose age-zero
    /// cells come from it.
    pub maternal: Option<MaternalMode>,
}

impl Default for InstrumentOptions {
    fn default() -> Self {
        InstrumentOptions {
            variant: Variant::Annual,
            inflator: None,
            regions: None,
            base_year: None,
            reference: ReferencePeriod::LastYear,
            leave_one_out: true,
            maternal: None,
        }
    }
}

/// Builds the simulated-eligibility table from the impute outputs in
/// `input` and joins family totals onto the analysis rows. Any family that
/// needs an undefined cell aborts the stage.
pub fn run_instrument(input: &Path, rules_dir: &Path, opts: &InstrumentOptions, out: &Path) -> Result<RunManifest, PipelineError> {
    let inflator = match (opts.variant.series(), &opts.inflator) {
        (None, _) => None,
        (Some(_), None) => {
            return Err(InstrumentError::MissingInput(format!("variant {} needs an income index file", opts.variant)).into());
        }
        (Some(series), Some(path)) => Some((series, path)),
    };
    create_dir(out)?;
    let mut m = RunManifest::new("instrument", None);
    let fam_path = input.join(FAMILIES_FILE);
    let child_path = input.join(CHILDREN_FILE);
    add_input(&mut m, &fam_path)?;
    add_input(&mut m, &child_path)?;
    m.add_input_dir(rules_dir).map_err(|e| io_err(rules_dir, e))?;
    m.note("variant", opts.variant.as_str());
    m.note("reference", opts.reference);
    m.note("leave_one_out", opts.leave_one_out);
    let rules = load_rules(rules_dir)?;
    let children: Vec<ChildRow> = read_rows(&child_path)?;
    let donors = donor_families(&children);
    let families: Vec<DonorFamily> = donors.iter().map(|(_, f)| f.clone()).collect();
    let targets: Vec<(StateId, i32)> = families.iter().map(|f| (f.state.clone(), f.year)).collect::<BTreeSet<_>>().into_iter().collect();

    let table = match inflator {
        None => rules_sim_table(&families, &targets, opts.leave_one_out, Variant::Annual, &rules, opts.reference)?,
        Some((series, path)) => {
            add_input(&mut m, path)?;
            if let Some(r) = &opts.regions {
                add_input(&mut m, r)?;
            }
            let index = IncomeInflator::read_csv(series, path, opts.regions.as_deref())?;
            let base = opts.base_year.unwrap_or_else(|| families.iter().map(|f| f.year).min().unwrap_or(0));
            m.note("base_year", base);
            let years: BTreeSet<i32> = targets.iter().map(|t| t.1).collect();
            let mut shifted = Vec::new();
            for y in years {
                shifted.extend(fixed_eligibility_inputs(&families, base, &index, y)?);
            }
            rules_sim_table(&shifted, &targets, opts.leave_one_out, opts.variant, &rules, opts.reference)?
        }
    };
    write_sim_table(&table, &out.join(SIM_TABLE_FILE))?;
    let undefined = table.undefined_cells().count();
    m.note("undefined_cells", undefined);

    let maternal = match opts.maternal {
        Some(mode) => {
            let wpath = input.join(WOMEN_FILE);
            add_input(&mut m, &wpath)?;
            let women: Vec<WomanRecord> = read_rows::<WomanRow>(&wpath)?.iter().map(WomanRow::record).collect();
            let t = maternal_sim_eligibility(&women, mode, &targets, &rules)?;
            write_sim_table(&t, &out.join(MATERNAL_TABLE_FILE))?;
            m.note("maternal_mode", mode.as_str());
            Some(t)
        }
        None => None,
    };

    // Family totals, then the analysis rows with SIMT appended.
    let mut simt_rows = Vec::with_capacity(donors.len());
    let mut by_family: HashMap<u64, (f64, usize)> = HashMap::with_capacity(donors.len());
    for (i, (id, f)) in donors.iter().enumerate() {
        let simt = family_simt(&f.ages, &f.state, f.year, &f.group, &table)?;
        simt_rows.push(FamilySimtRow { family_id: *id, state: f.state.clone(), year: f.year, group: f.group.clone(), n_children: f.ages.len() as u32, simt });
        by_family.insert(*id, (simt, i));
    }
    write_family_simt(&simt_rows, &out.join(FAMILY_SIMT_FILE))?;

    let fam_file = fam_path.display().to_string();
    let mut rdr = csv::Reader::from_path(&fam_path).map_err(|e| io_err(&fam_path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(&fam_path, e))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| PipelineError::Schema { file: fam_file.clone(), message: format!("missing column `{name}`") })
    };
    let (id_col, race_col) = (col("family_id")?, col("race")?);
    let an_path = out.join(ANALYSIS_FILE);
    let mut w = csv_writer(&an_path)?;
    let mut out_header: Vec<&str> = headers.iter().collect();
    out_header.push("simt");
    if maternal.is_some() {
        out_header.push("simt_maternal");
    }
    w.write_record(&out_header).map_err(|e| io_err(&an_path, e))?;
    let mut n_rows = 0u64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(&fam_path, e))?;
        let id: u64 = rec.get(id_col).unwrap_or("").parse().map_err(|_| PipelineError::Schema {
            file: fam_file.clone(),
            message: format!("invalid family_id {:?}", rec.get(id_col).unwrap_or("")),
        })?;
        let (simt, idx) = *by_family
            .get(&id)
            .ok_or_else(|| PipelineError::Schema { file: fam_file.clone(), message: format!("family {id} has no rows in {CHILDREN_FILE}") })?;
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        row.push(simt.to_string());
        if let Some(mt) = &maternal {
            let f = &donors[idx].1;
            let race = rec.get(race_col).unwrap_or("");
            row.push(maternal_simt(f, race, &table, mt)?.to_string());
        }
        w.write_record(&row).map_err(|e| io_err(&an_path, e))?;
        n_rows += 1;
    }
    w.flush().map_err(|e| io_err(&an_path, e))?;

    m.rows_in.insert(CHILDREN_FILE.into(), children.len() as u64);
    m.rows_out.insert(SIM_TABLE_FILE.into(), table.cells.len() as u64);
    m.rows_out.insert(FAMILY_SIMT_FILE.into(), simt_rows.len() as u64);
    m.rows_out.insert(ANALYSIS_FILE.into(), n_rows);
    let mut outputs = vec![SIM_TABLE_FILE, FAMILY_SIMT_FILE, ANALYSIS_FILE];
    if maternal.is_some() {
        outputs.push(MATERNAL_TABLE_FILE);
    }
    finish(m, out, &outputs)
}

/// SIMT with every age-zero child's cell replaced by the mother's race cell
/// of the pregnancy table.
fn maternal_simt(f: &DonorFamily, race: &str, table: &SimTable, maternal: &SimTable) -> Result<f64, InstrumentError> {
    let mut total = 0.0;
    for &a in &f.ages {
        total += if a == 0 {
            maternal.value(&CellKey { state: f.state.clone(), year: f.year, age: 0, group: race.to_string() })?
        } else {
            table.lookup(&f.state, f.year, a, &f.group)?
        };
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateOptions {
    pub absorb: AbsorbOptions,
    /// Also write the remaining-variation table.
    pub remaining_variation: bool,
}

/// Fits the spec on the analysis file.
pub fn run_estimate(data: &Path, spec_path: &Path, opts: &EstimateOptions, out: &Path) -> Result<(RunManifest, FitResult), PipelineError> {
    let spec = RegressionSpec::read(spec_path)?;
    estimate_with_spec(data, &spec, Some(spec_path), opts, out)
}

pub fn estimate_with_spec(
    data: &Path,
    spec: &RegressionSpec,
    spec_path: Option<&Path>,
    opts: &EstimateOptions,
    out: &Path,
) -> Result<(RunManifest, FitResult), PipelineError> {
    create_dir(out)?;
    let mut m = RunManifest::new("estimate", None);
    add_input(&mut m, data)?;
    m.config_digest = Some(crate::manifest::sha256_bytes(&match spec_path {
        Some(p) => read_text(p)?.into_bytes(),
        None => spec.to_toml().into_bytes(),
    }));
    let frame = Frame::read_csv(data)?;
    let mut design = crate::estimation::build_design(&frame, spec)?;
    let ledger = design.ledger.clone();
    let fit = crate::estimation::fit(&mut design, &opts.absorb)?;
    drop(design);
    fit.write_coefficients(&out.join(COEFFICIENTS_FILE))?;
    let fit_path = out.join(FIT_FILE);
    let mut text = serde_json::to_string_pretty(&fit).map_err(|e| io_err(&fit_path, e))?;
    text.push('\n');
    fs::write(&fit_path, text).map_err(|e| io_err(&fit_path, e))?;
    write_sample_ledger(&ledger, &out.join(SAMPLE_LEDGER_FILE)).map_err(|e| io_err(&out.join(SAMPLE_LEDGER_FILE), e))?;
    let mut outputs = vec![COEFFICIENTS_FILE, FIT_FILE, SAMPLE_LEDGER_FILE];

    if !spec.thresholds.is_empty() {
        let fits = threshold_regressions(&frame, spec, &spec.thresholds, &opts.absorb)?;
        let path = out.join(THRESHOLDS_FILE);
        let mut w = csv_writer(&path)?;
        w.write_record(["threshold", "share_above", "term", "coefficient", "std_error", "p", "degenerate"]).map_err(|e| io_err(&path, e))?;
        let term = spec.treatment.clone().unwrap_or_default();
        for t in &fits {
            let (b, se, p) = match &t.fit {
                Some(f) => (f.coef(&term).map(fmt_num), f.se(&term).map(fmt_num), f.p_value(&term).map(fmt_num)),
                None => (None, None, None),
            };
            w.write_record([
                t.threshold.to_string(),
                t.share_above.to_string(),
                term.clone(),
                b.unwrap_or_default(),
                se.unwrap_or_default(),
                p.unwrap_or_default(),
                u8::from(t.degenerate()).to_string(),
            ])
            .map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        outputs.push(THRESHOLDS_FILE);
    }
    if opts.remaining_variation {
        let rows = remaining_variation(&frame, spec, &opts.absorb)?;
        write_rows(&out.join(REMAINING_FILE), &rows)?;
        outputs.push(REMAINING_FILE);
    }

    m.rows_in.insert(data.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(), frame.n_rows as u64);
    m.rows_out.insert("retained".into(), fit.n_obs as u64);
    m.rows_out.insert(SAMPLE_LEDGER_FILE.into(), ledger.len() as u64);
    m.note("model", spec.model.number());
    m.note("dropped_collinear", &fit.dropped_collinear);
    m.note("clusters", fit.n_clusters);
    m.note("absorption_sweeps", fit.sweeps);
    let m = finish(m, out, &outputs)?;
    Ok((m, fit))
}

/// One ITT-to-TOT conversion. The ITT coefficient is given directly or read
/// from a fit; the SIMT change is given directly or computed from a data
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotSpec {
    pub group: String,
    pub itt_beta: Option<f64>,
    /// Fit JSON, relative to the config file.
    pub fit: Option<String>,
    #[serde(default = "default_term")]
    pub term: String,
    pub delta_simt: Option<f64>,
    /// Analysis CSV for computing the SIMT change.
    pub data: Option<String>,
    #[serde(default = "default_term")]
    pub simt_column: String,
    #[serde(default = "default_weight")]
    pub weight_column: String,
    #[serde(default = "default_year")]
    pub year_column: String,
    pub takeup_rate: f64,
}

fn default_term() -> String {
    "simt".into()
}
fn default_weight() -> String {
    "weight".into()
}
fn default_year() -> String {
    "year".into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default)]
    pub tot: Vec<TotSpec>,
    #[serde(default)]
    pub elasticity: Vec<TakeUpEstimate>,
    #[serde(default)]
    pub fiscal: Vec<FiscalInputs>,
}

impl ReportConfig {
    pub fn read(path: &Path) -> Result<ReportConfig, PipelineError> {
        toml::from_str(&read_text(path)?).map_err(|e| PipelineError::Config { path: path.to_path_buf(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tots: Vec<(String, TotResult)>,
    pub elasticities: Vec<(String, f64)>,
    pub ledgers: Vec<FiscalLedger>,
}

pub fn read_fit(path: &Path) -> Result<FitResult, PipelineError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::Schema { file: path.display().to_string(), message: e.to_string() })
}

/// Evaluates a report config. `default_fit` serves TOT entries that name
/// neither a coefficient nor a fit.
pub fn run_report(config: &Path, default_fit: Option<&Path>, out: &Path) -> Result<(RunManifest, Report), PipelineError> {
    let cfg = ReportConfig::read(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    create_dir(out)?;
    let mut m = RunManifest::new("report", None);
    m.config_digest = Some(crate::manifest::sha256_bytes(read_text(config)?.as_bytes()));

    let mut tots = Vec::new();
    for t in &cfg.tot {
        let itt = match (t.itt_beta, &t.fit) {
            (Some(b), _) => b,
            (None, fit) => {
                let path = match fit {
                    Some(f) => base.join(f),
                    None => default_fit
                        .map(Path::to_path_buf)
                        .ok_or_else(|| PipelineError::Config { path: config.to_path_buf(), message: format!("TOT group {} names no coefficient or fit", t.group) })?,
                };
                add_input(&mut m, &path)?;
                let fit = read_fit(&path)?;
                fit.coef(&t.term).ok_or_else(|| PipelineError::Schema { file: path.display().to_string(), message: format!("no term `{}`", t.term) })?
            }
        };
        let delta = match (t.delta_simt, &t.data) {
            (Some(d), _) => d,
            (None, Some(data)) => {
                let path = base.join(data);
                add_input(&mut m, &path)?;
                let frame = Frame::read_csv(&path)?;
                let years: Vec<i32> = frame.numeric(&t.year_column)?.iter().map(|&y| y as i32).collect();
                delta_simt(frame.numeric(&t.simt_column)?, frame.numeric(&t.weight_column)?, &years)?
            }
            (None, None) => {
                return Err(PipelineError::Config { path: config.to_path_buf(), message: format!("TOT group {} needs delta_simt or data", t.group) });
            }
        };
        tots.push((t.group.clone(), itt_to_tot(itt, delta, t.takeup_rate)?));
    }
    let elasticities: Vec<(String, f64)> = cfg.elasticity.iter().map(|e| Ok((e.group.clone(), takeup_elasticity(e)?))).collect::<Result<_, PostError>>()?;
    let ledgers: Vec<FiscalLedger> = cfg.fiscal.iter().map(fiscal_balance).collect::<Result<_, _>>()?;

    write_rows(
        &out.join("tot.csv"),
        &tots
            .iter()
            .map(|(g, t)| (g, t.itt_beta, t.delta_simt, t.takeup_rate, t.scaled_itt, t.scale_factor, t.tot))
            .collect::<Vec<_>>(),
    )?;
    prepend_header(&out.join("tot.csv"), "group,itt_beta,delta_simt,takeup_rate,scaled_itt,scale_factor,tot")?;
    write_rows(&out.join("elasticity.csv"), &elasticities)?;
    prepend_header(&out.join("elasticity.csv"), "group,elasticity")?;
    let fiscal_path = out.join("fiscal.csv");
    let mut w = csv_writer(&fiscal_path)?;
    w.write_record(["group", "item", "amount"]).map_err(|e| io_err(&fiscal_path, e))?;
    for l in &ledgers {
        let mut items = vec![("medicaid_cost".to_string(), l.medicaid_cost), ("tax_revenue_change".to_string(), l.tax_revenue_change)];
        items.extend(l.transfer_changes.iter().map(|(k, v)| (format!("transfer:{k}"), *v)));
        items.push(("net_fiscal_cost".into(), l.net_fiscal_cost));
        items.push(("offset_share".into(), l.offset_share));
        for (item, v) in items {
            w.write_record([l.group.clone(), item, v.to_string()]).map_err(|e| io_err(&fiscal_path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&fiscal_path, e))?;
    let summary = summary_text(&tots, &ledgers, &elasticities);
    fs::write(out.join("summary.txt"), &summary).map_err(|e| io_err(&out.join("summary.txt"), e))?;

    m.rows_out.insert("tot".into(), tots.len() as u64);
    m.rows_out.insert("elasticity".into(), elasticities.len() as u64);
    m.rows_out.insert("fiscal".into(), ledgers.len() as u64);
    let m = finish(m, out, &["tot.csv", "elasticity.csv", "fiscal.csv", "summary.txt"])?;
    Ok((m, Report { tots, elasticities, ledgers }))
}

/// Tuple rows serialize without a header; this adds one.
fn prepend_header(path: &Path, header: &str) -> Result<(), PipelineError> {
    let body = read_text(path)?;
    fs::write(path, format!("{header}\n{body}")).map_err(|e| io_err(path, e))
}

/// Marital status of a family as written in the group column.
pub fn marital_group(status: MaritalStatus) -> &'static str {
    group_of(status == MaritalStatus::Married)
}
