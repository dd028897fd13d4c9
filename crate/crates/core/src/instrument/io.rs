//! CSV forms of the simulated-eligibility outputs.
//!
//! `sim_table.csv`: `state,year,age,group,variant,leave_one_out,value,donor_weight,donors`,
//! with an empty `value` for undefined cells. `family_simt.csv`:
//! `family_id,state,year,group,n_children,simt`.

use std::path::Path;

use super::table::{CellKey, SimCell, SimTable};
use super::{InstrumentError, Variant};
use crate::units::StateId;

const TABLE_HEADER: &[&str] = &["state", "year", "age", "group", "variant", "leave_one_out", "value", "donor_weight", "donors"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> InstrumentError {
    InstrumentError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

pub fn write_sim_table(table: &SimTable, path: &Path) -> Result<(), InstrumentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(TABLE_HEADER).map_err(|e| io_err(path, e))?;
    for (k, c) in &table.cells {
        w.write_record([
            k.state.as_str().to_string(),
            k.year.to_string(),
            k.age.to_string(),
            k.group.clone(),
            table.variant.to_string(),
            u8::from(table.leave_one_out).to_string(),
            c.value.map(|v| v.to_string()).unwrap_or_default(),
            c.donor_weight.to_string(),
            c.donors.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_sim_table(path: &Path) -> Result<SimTable, InstrumentError> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    let mut cols = [0usize; 9];
    for (slot, name) in cols.iter_mut().zip(TABLE_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| InstrumentError::MissingColumn { file: file.clone(), column: name.to_string() })?;
    }
    let mut table: Option<SimTable> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str, v: &str| InstrumentError::Parse { file: file.clone(), line, message: format!("invalid {what} {v:?}") };
        let get = |i: usize| rec.get(cols[i]).unwrap_or("");
        let num = |i: usize, what: &str| get(i).parse::<f64>().map_err(|_| bad(what, get(i)));
        let variant: Variant = get(4).parse().map_err(|_| bad("variant", get(4)))?;
        let loo = match get(5) {
            "1" => true,
            "0" => false,
            v => return Err(bad("leave_one_out flag", v)),
        };
        let t = table.get_or_insert_with(|| SimTable { variant, leave_one_out: loo, cells: Default::default() });
        if t.variant != variant || t.leave_one_out != loo {
            return Err(InstrumentError::Parse { file: file.clone(), line, message: "variant or leave-one-out flag differs from the first row".into() });
        }
        let key = CellKey {
            state: StateId::new(get(0)),
            year: get(1).parse().map_err(|_| bad("year", get(1)))?,
            age: get(2).parse().map_err(|_| bad("age", get(2)))?,
            group: get(3).to_string(),
        };
        let value = if get(6).is_empty() { None } else { Some(num(6, "value")?) };
        let cell = SimCell { value, donor_weight: num(7, "donor weight")?, donors: get(8).parse().map_err(|_| bad("donor count", get(8)))? };
        t.cells.insert(key, cell);
    }
    table.ok_or_else(|| InstrumentError::Parse { file, line: 1, message: "table has no rows".into() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySimtRow {
    pub family_id: u64,
    pub state: StateId,
    pub year: i32,
    pub group: String,
    pub n_children: u32,
    pub simt: f64,
}

pub fn write_family_simt(rows: &[FamilySimtRow], path: &Path) -> Result<(), InstrumentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["family_id", "state", "year", "group", "n_children", "simt"]).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.family_id.to_string(),
            r.state.as_str().to_string(),
            r.year.to_string(),
            r.group.clone(),
            r.n_children.to_string(),
            r.simt.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_family_simt(path: &Path) -> Result<Vec<FamilySimtRow>, InstrumentError> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = || InstrumentError::Parse { file: file.clone(), line, message: "malformed family row".into() };
        let get = |i: usize| rec.get(i).ok_or_else(bad);
        out.push(FamilySimtRow {
            family_id: get(0)?.parse().map_err(|_| bad())?,
            state: StateId::new(get(1)?),
            year: get(2)?.parse().map_err(|_| bad())?,
            group: get(3)?.to_string(),
            n_children: get(4)?.parse().map_err(|_| bad())?,
            simt: get(5)?.parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}
