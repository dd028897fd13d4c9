//! Column store for regression inputs. A CSV column is numeric when every
//! non-empty cell parses as a number (empty cells become NaN); otherwise it
//! is categorical.

use std::collections::BTreeMap;
use std::path::Path;

use super::EstimationError;

/// Categorical codes with sorted levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub codes: Vec<u32>,
}

impl Factor {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn from_strings(name: &str, values: &[String]) -> Factor {
        let mut levels: Vec<String> = values.to_vec();
        levels.sort();
        levels.dedup();
        let index: BTreeMap<&str, u32> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let codes = values.iter().map(|v| index[v.as_str()]).collect();
        Factor { name: name.to_string(), levels, codes }
    }

    /// Levels in numeric order. NaN is not allowed.
    pub fn from_numbers(name: &str, values: &[f64]) -> Result<Factor, EstimationError> {
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(EstimationError::MissingValue { column: name.to_string(), row });
        }
        let mut uniq: Vec<f64> = values.to_vec();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let codes = values.iter().map(|v| uniq.partition_point(|u| u < v) as u32).collect();
        Ok(Factor { name: name.to_string(), levels: uniq.iter().map(|v| v.to_string()).collect(), codes })
    }

    /// Crossed factor; levels are ordered by the component codes.
    pub fn interact(parts: &[&Factor]) -> Factor {
        let (first, rest) = parts.split_first().expect("at least one factor");
        rest.iter().fold((*first).clone(), |acc, f| acc.cross(f))
    }

    fn cross(&self, other: &Factor) -> Factor {
        let width = other.levels.len() as u64;
        let keys: Vec<u64> = self.codes.iter().zip(&other.codes).map(|(&a, &b)| a as u64 * width + b as u64).collect();
        let mut uniq = keys.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let codes = keys.iter().map(|k| uniq.binary_search(k).expect("present") as u32).collect();
        let levels = uniq
            .iter()
            .map(|k| format!("{}#{}", self.levels[(k / width) as usize], other.levels[(k % width) as usize]))
            .collect();
        Factor { name: format!("{}#{}", self.name, other.name), levels, codes }
    }

    /// Keeps `rows` and renumbers levels to those still present.
    pub fn subset(&self, rows: &[usize]) -> Factor {
        let mut used = vec![false; self.levels.len()];
        for &r in rows {
            used[self.codes[r] as usize] = true;
        }
        let mut remap = vec![u32::MAX; self.levels.len()];
        let mut levels = Vec::new();
        for (i, u) in used.iter().enumerate() {
            if *u {
                remap[i] = levels.len() as u32;
                levels.push(self.levels[i].clone());
            }
        }
        Factor { name: self.name.clone(), levels, codes: rows.iter().map(|&r| remap[self.codes[r] as usize]).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Cat(Factor),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    pub n_rows: usize,
    pub columns: BTreeMap<String, Column>,
}

impl Frame {
    pub fn new(n_rows: usize) -> Frame {
        Frame { n_rows, columns: BTreeMap::new() }
    }

    pub fn add_numeric(&mut self, name: &str, values: Vec<f64>) -> &mut Self {
        assert_eq!(values.len(), self.n_rows, "column {name} length");
        self.columns.insert(name.to_string(), Column::Num(values));
        self
    }

    pub fn add_text(&mut self, name: &str, values: &[String]) -> &mut Self {
        assert_eq!(values.len(), self.n_rows, "column {name} length");
        self.columns.insert(name.to_string(), Column::Cat(Factor::from_strings(name, values)));
        self
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64], EstimationError> {
        match self.columns.get(name) {
            Some(Column::Num(v)) => Ok(v),
            Some(Column::Cat(_)) => Err(EstimationError::NotNumeric(name.to_string())),
            None => Err(EstimationError::MissingColumn(name.to_string())),
        }
    }

    pub fn factor(&self, name: &str) -> Result<Factor, EstimationError> {
        match self.columns.get(name) {
            Some(Column::Num(v)) => Factor::from_numbers(name, v),
            Some(Column::Cat(f)) => Ok(f.clone()),
            None => Err(EstimationError::MissingColumn(name.to_string())),
        }
    }

    /// Reads a CSV in two passes: the first settles each column's type.
    pub fn read_csv(path: &Path) -> Result<Frame, EstimationError> {
        let io = |e: csv::Error| EstimationError::Io { path: path.to_path_buf(), message: e.to_string() };
        let open = || csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(io);
        let mut rdr = open()?;
        let headers: Vec<String> = rdr.headers().map_err(io)?.iter().map(str::to_string).collect();
        let mut numeric = vec![true; headers.len()];
        let mut nonempty = vec![false; headers.len()];
        let mut n = 0;
        let mut rec = csv::StringRecord::new();
        while rdr.read_record(&mut rec).map_err(io)? {
            if rec.len() != headers.len() {
                return Err(EstimationError::Io {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected {} fields, found {}", rec.position().map_or(0, |p| p.line()), headers.len(), rec.len()),
                });
            }
            for (j, v) in rec.iter().enumerate() {
                if !v.is_empty() {
                    nonempty[j] = true;
                    if numeric[j] && v.parse::<f64>().is_err() {
                        numeric[j] = false;
                    }
                }
            }
            n += 1;
        }
        let numeric: Vec<bool> = numeric.iter().zip(&nonempty).map(|(a, b)| *a && *b).collect();
        let mut nums: Vec<Vec<f64>> = numeric.iter().map(|&is| if is { Vec::with_capacity(n) } else { Vec::new() }).collect();
        let mut texts: Vec<(Vec<u32>, BTreeMap<String, u32>)> = vec![(Vec::new(), BTreeMap::new()); headers.len()];
        let mut rdr = open()?;
        while rdr.read_record(&mut rec).map_err(io)? {
            for (j, v) in rec.iter().enumerate() {
                if numeric[j] {
                    nums[j].push(if v.is_empty() { f64::NAN } else { v.parse().expect("checked in first pass") });
                } else {
                    let (codes, dict) = &mut texts[j];
                    let code = match dict.get(v) {
                        Some(&c) => c,
                        None => {
                            let c = dict.len() as u32;
                            dict.insert(v.to_string(), c);
                            c
                        }
                    };
                    codes.push(code);
                }
            }
        }
        let mut frame = Frame::new(n);
        for (j, name) in headers.iter().enumerate() {
            if numeric[j] {
                frame.add_numeric(name, std::mem::take(&mut nums[j]));
            } else {
                let (codes, dict) = std::mem::take(&mut texts[j]);
                // BTreeMap iterates in sorted order, which fixes the level order.
                let mut remap = vec![0u32; dict.len()];
                let mut levels = Vec::with_capacity(dict.len());
                for (i, (level, first_seen)) in dict.into_iter().enumerate() {
                    remap[first_seen as usize] = i as u32;
                    levels.push(level);
                }
                let codes = codes.into_iter().map(|c| remap[c as usize]).collect();
                frame.columns.insert(name.clone(), Column::Cat(Factor { name: name.clone(), levels, codes }));
            }
        }
        Ok(frame)
    }
}
