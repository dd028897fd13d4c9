//! Assembling the regression design from a frame and a specification.

use std::io::Write;
use std::path::Path;

use super::frame::{Column, Factor, Frame};
use super::spec::{RegressionSpec, Sample};
use super::EstimationError;

pub const INTERCEPT: &str = "_cons";

/// A row excluded from the estimation sample and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDrop {
    pub row: usize,
    pub reason: String,
}

pub fn write_sample_ledger(entries: &[SampleDrop], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "row,reason")?;
    for e in entries {
        writeln!(out, "{},{}", e.row, e.reason)?;
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub outcome: String,
    pub y: Vec<f64>,
    /// Regressor names, aligned with `x`.
    pub names: Vec<String>,
    /// Regressors, one vector per column.
    pub x: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Cluster codes, dense from 0.
    pub clusters: Vec<u32>,
    pub n_clusters: usize,
    /// Factors still to be absorbed, or already absorbed from the
    /// regressors once `absorbed_dof` is set.
    pub absorbed: Vec<Factor>,
    pub absorbed_dof: Option<usize>,
    /// Whether `y` has been residualized on `absorbed`.
    pub y_absorbed: bool,
    /// Weighted norms of the regressors before absorption; the collinearity
    /// tolerance is relative to these.
    pub pre_norms: Vec<f64>,
    /// Outcome before any transformation, for totals and means.
    pub y_raw: Vec<f64>,
    /// Period codes, 0 for the earliest year in the sample.
    pub period: Vec<u32>,
    /// Frame rows the design rows came from.
    pub rows: Vec<usize>,
    pub ledger: Vec<SampleDrop>,
}

impl DesignMatrix {
    /// A design from raw columns, with no absorbed factors and every row in
    /// period 0.
    pub fn from_columns(
        outcome: &str,
        y: Vec<f64>,
        columns: Vec<(String, Vec<f64>)>,
        weights: Vec<f64>,
        clusters: &[u32],
    ) -> Result<DesignMatrix, EstimationError> {
        let n = y.len();
        if columns.iter().any(|(_, c)| c.len() != n) || weights.len() != n || clusters.len() != n {
            return Err(EstimationError::Spec("column lengths differ".into()));
        }
        let cluster = Factor::from_numbers("cluster", &clusters.iter().map(|&c| c as f64).collect::<Vec<_>>())?;
        let (names, x) = columns.into_iter().unzip();
        Ok(DesignMatrix {
            outcome: outcome.to_string(),
            y_raw: y.clone(),
            y,
            names,
            x,
            weights,
            n_clusters: cluster.n_levels(),
            clusters: cluster.codes,
            absorbed: Vec::new(),
            absorbed_dof: None,
            y_absorbed: false,
            pre_norms: Vec::new(),
            period: vec![0; n],
            rows: (0..n).collect(),
            ledger: Vec::new(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// The same design with a different outcome on the same rows.
    pub fn with_outcome(&self, outcome: &str, y: Vec<f64>) -> DesignMatrix {
        assert_eq!(y.len(), self.n_obs());
        DesignMatrix { outcome: outcome.to_string(), y_raw: y.clone(), y, y_absorbed: false, ..self.clone() }
    }

    pub fn set_absorbed(&mut self, factors: Vec<Factor>) {
        self.absorbed = factors;
        self.absorbed_dof = None;
        self.y_absorbed = false;
        self.pre_norms.clear();
    }
}

/// Above this many levels outside the largest factor the exact rank is not
/// computed and the pairwise count is used instead.
const EXACT_RANK_LEVELS: usize = 3000;

/// Whether every level of `fine` lies inside a single level of `coarse`, so
/// that `coarse` adds nothing once `fine` is absorbed.
fn nested_in(coarse: &Factor, fine: &Factor) -> bool {
    let mut map = vec![u32::MAX; fine.n_levels()];
    for (&c, &f) in coarse.codes.iter().zip(&fine.codes) {
        let slot = &mut map[f as usize];
        if *slot == u32::MAX {
            *slot = c;
        } else if *slot != c {
            return false;
        }
    }
    true
}

/// Number of connected components of the bipartite graph linking the levels
/// of `a` and `b` that occur together.
fn components(a: &Factor, b: &Factor) -> usize {
    let na = a.n_levels();
    let mut parent: Vec<usize> = (0..na + b.n_levels()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (&ca, &cb) in a.codes.iter().zip(&b.codes) {
        let (ra, rb) = (find(&mut parent, ca as usize), find(&mut parent, na + cb as usize));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count()
}

/// Rank of a symmetric positive semidefinite matrix by diagonally pivoted
/// Cholesky.
fn psd_rank(mut s: nalgebra::DMatrix<f64>) -> usize {
    let n = s.nrows();
    let max_diag = (0..n).map(|i| s[(i, i)]).fold(0.0, f64::max);
    let tol = 1e-9 * max_diag.max(1.0);
    let mut free: Vec<usize> = (0..n).collect();
    let mut rank = 0;
    while let Some((pos, &p)) = free.iter().enumerate().max_by(|a, b| s[(*a.1, *a.1)].total_cmp(&s[(*b.1, *b.1)])) {
        let d = s[(p, p)];
        if d <= tol {
            break;
        }
        rank += 1;
        free.swap_remove(pos);
        let col: Vec<f64> = free.iter().map(|&i| s[(i, p)]).collect();
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                s[(i, j)] -= col[a] * col[b] / d;
            }
        }
    }
    rank
}

/// Parameters spent on the absorbed factors, counting the intercept: the
/// rank of their combined indicator matrix. Factors nested in another are
/// dropped first; two factors lose one level per connected component. With
/// more, the rank comes from the Gram matrix of the smaller factors after
/// partialling out the largest, unless that is too big, in which case each
/// further factor is assumed to lose exactly one level.
pub fn fixed_effect_dof(factors: &[Factor]) -> usize {
    let redundant = |i: usize| {
        factors.iter().enumerate().any(|(j, other)| {
            j != i && nested_in(&factors[i], other) && (j < i || !nested_in(other, &factors[i]))
        })
    };
    let mut kept: Vec<&Factor> = (0..factors.len()).filter(|&i| !redundant(i)).map(|i| &factors[i]).collect();
    kept.sort_by_key(|f| std::cmp::Reverse(f.n_levels()));
    match kept.as_slice() {
        [] => 0,
        [a] => a.n_levels(),
        [a, b] => a.n_levels() + b.n_levels() - components(a, b),
        [first, rest @ ..] => {
            let offsets: Vec<usize> = rest
                .iter()
                .scan(0, |acc, f| {
                    let o = *acc;
                    *acc += f.n_levels();
                    Some(o)
                })
                .collect();
            let width: usize = rest.iter().map(|f| f.n_levels()).sum();
            if width > EXACT_RANK_LEVELS {
                log::warn!("{width} fixed-effect levels outside the largest factor; degrees of freedom use the pairwise count");
                return first.n_levels() + rest[0].n_levels() - components(first, rest[0])
                    + rest[1..].iter().map(|f| f.n_levels() - 1).sum::<usize>();
            }
            let mut gram = nalgebra::DMatrix::<f64>::zeros(width, width);
            let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); first.n_levels()];
            for (i, &g) in first.codes.iter().enumerate() {
                by_level[g as usize].push(i);
            }
            let mut counts = vec![0.0f64; width];
            let mut touched = Vec::new();
            let mut cols = vec![0usize; rest.len()];
            for rows in &by_level {
                for &i in rows {
                    for ((c, f), o) in cols.iter_mut().zip(rest).zip(&offsets) {
                        *c = o + f.codes[i] as usize;
                    }
                    for &a in &cols {
                        if counts[a] == 0.0 {
                            touched.push(a);
                        }
                        counts[a] += 1.0;
                        for &b in &cols {
                            gram[(a, b)] += 1.0;
                        }
                    }
                }
                let size = rows.len() as f64;
                for &a in &touched {
                    for &b in &touched {
                        gram[(a, b)] -= counts[a] * counts[b] / size;
                    }
                }
                for &a in &touched {
                    counts[a] = 0.0;
                }
                touched.clear();
            }
            first.n_levels() + psd_rank(gram)
        }
    }
}

/// Rows left after repeatedly removing observations that are alone in a
/// level of some factor.
fn drop_singletons(factors: &[Factor], mut rows: Vec<usize>, ledger: &mut Vec<SampleDrop>, source: &[usize]) -> Vec<usize> {
    loop {
        let mut keep = vec![true; rows.len()];
        for f in factors {
            let mut counts = vec![0u32; f.n_levels()];
            for &r in &rows {
                counts[f.codes[r] as usize] += 1;
            }
            for (k, &r) in keep.iter_mut().zip(&rows) {
                if counts[f.codes[r] as usize] == 1 && *k {
                    *k = false;
                    ledger.push(SampleDrop { row: source[r], reason: format!("singleton:{}", f.name) });
                }
            }
        }
        if keep.iter().all(|&k| k) {
            return rows;
        }
        rows = rows.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
    }
}

fn numeric_at<'a>(frame: &'a Frame, name: &str) -> Result<Option<&'a [f64]>, EstimationError> {
    match frame.columns.get(name) {
        Some(Column::Num(v)) => Ok(Some(v)),
        Some(Column::Cat(_)) => Ok(None),
        None => Err(EstimationError::MissingColumn(name.to_string())),
    }
}

/// Fixed-effect and categorical-control factors of the model, before any
/// marital interaction, as lists of column names to cross.
fn factor_plan(spec: &RegressionSpec) -> Vec<Vec<&str>> {
    let (s, t) = (spec.state.as_str(), spec.year.as_str());
    let ages = [spec.youngest_age.as_str(), spec.oldest_age.as_str(), spec.age_gap.as_str()];
    let mut plan: Vec<Vec<&str>> = vec![vec![s], vec![t]];
    plan.extend(ages.iter().map(|a| vec![*a]));
    plan.extend(spec.factors.iter().map(|f| vec![f.as_str()]));
    if spec.model.state_by_age() {
        plan.extend(ages.iter().map(|a| vec![s, *a]));
    }
    if spec.model.state_by_year() {
        plan.push(vec![s, t]);
    }
    if spec.model.year_by_age() {
        plan.extend(ages.iter().map(|a| vec![t, *a]));
    }
    plan
}

/// Builds the design for `spec`. When `restrict` is given only those frame
/// rows are considered.
pub fn build_design_on(frame: &Frame, spec: &RegressionSpec, restrict: Option<&[usize]>) -> Result<DesignMatrix, EstimationError> {
    spec.validate()?;
    let n = frame.n_rows;
    let mut ledger = Vec::new();
    let marital = frame.numeric(&spec.marital)?;
    if let Some(row) = marital.iter().position(|&m| m != 0.0 && m != 1.0 && !m.is_nan()) {
        return Err(EstimationError::BadValue { column: spec.marital.clone(), row, message: "marital indicator must be 0 or 1".into() });
    }
    let weights: Vec<f64> = match &spec.weight {
        Some(w) => frame.numeric(w)?.to_vec(),
        None => vec![1.0; n],
    };
    let state_controls: &[String] = if spec.model.uses_state_controls() { &spec.state_controls } else { &[] };
    let mut numeric_names: Vec<&str> = vec![spec.outcome.as_str()];
    numeric_names.extend(spec.treatment.as_deref());
    numeric_names.extend(spec.controls.iter().map(String::as_str));
    numeric_names.extend(state_controls.iter().map(String::as_str));
    let numeric: Vec<&[f64]> = numeric_names.iter().map(|c| frame.numeric(c)).collect::<Result<_, _>>()?;
    let plan = factor_plan(spec);
    let mut factor_cols: Vec<&str> = plan.iter().flatten().copied().collect();
    factor_cols.push(spec.cluster.as_str());
    factor_cols.sort_unstable();
    factor_cols.dedup();
    let mut numeric_factor: Vec<(&str, &[f64])> = Vec::new();
    for c in &factor_cols {
        if let Some(v) = numeric_at(frame, c)? {
            numeric_factor.push((c, v));
        }
    }

    let candidates: Vec<usize> = match restrict {
        Some(r) => r.to_vec(),
        None => (0..n).collect(),
    };
    let mut rows = Vec::with_capacity(candidates.len());
    'rows: for r in candidates {
        let m = marital[r];
        let in_sample = match spec.sample {
            Sample::All => true,
            Sample::Single => m == 0.0,
            Sample::Married => m == 1.0,
        };
        if !in_sample && !m.is_nan() {
            continue;
        }
        if m.is_nan() {
            ledger.push(SampleDrop { row: r, reason: format!("missing:{}", spec.marital) });
            continue;
        }
        for (name, col) in numeric_names.iter().zip(&numeric) {
            if !col[r].is_finite() {
                ledger.push(SampleDrop { row: r, reason: format!("missing:{name}") });
                continue 'rows;
            }
        }
        for (name, col) in &numeric_factor {
            if !col[r].is_finite() {
                ledger.push(SampleDrop { row: r, reason: format!("missing:{name}") });
                continue 'rows;
            }
        }
        let w = weights[r];
        if !w.is_finite() || w < 0.0 {
            return Err(EstimationError::BadValue { column: spec.weight.clone().unwrap_or_default(), row: r, message: format!("weight {w}") });
        }
        if w == 0.0 {
            ledger.push(SampleDrop { row: r, reason: "zero_weight".into() });
            continue;
        }
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(EstimationError::EmptySample);
    }

    // Factors over the candidate rows; indices below refer to `rows`.
    let column_factor = |name: &str| -> Result<Factor, EstimationError> {
        match frame.columns.get(name) {
            Some(Column::Num(v)) => Factor::from_numbers(name, &rows.iter().map(|&r| v[r]).collect::<Vec<_>>()),
            Some(Column::Cat(f)) => Ok(f.subset(&rows)),
            None => Err(EstimationError::MissingColumn(name.to_string())),
        }
    };
    let mut base = std::collections::BTreeMap::new();
    for c in &factor_cols {
        base.insert(*c, column_factor(c)?);
    }
    let married_factor = Factor::from_numbers(&spec.marital, &rows.iter().map(|&r| marital[r]).collect::<Vec<_>>())?;
    let mut absorbed: Vec<Factor> = plan
        .iter()
        .map(|parts| {
            let mut fs: Vec<&Factor> = parts.iter().map(|p| &base[p]).collect();
            if spec.interact_with_marital {
                fs.push(&married_factor);
            }
            Factor::interact(&fs)
        })
        .collect();
    let local: Vec<usize> = (0..rows.len()).collect();
    let kept = drop_singletons(&absorbed, local, &mut ledger, &rows);
    for f in &mut absorbed {
        *f = f.subset(&kept);
    }
    let rows: Vec<usize> = kept.iter().map(|&i| rows[i]).collect();
    if rows.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    let cluster = base[spec.cluster.as_str()].subset(&kept);
    if cluster.n_levels() < 2 {
        return Err(EstimationError::SingleCluster);
    }
    let period = base[spec.year.as_str()].subset(&kept).codes;

    let take = |col: &[f64]| -> Vec<f64> { rows.iter().map(|&r| col[r]).collect() };
    let m: Vec<f64> = take(marital);
    let y = take(numeric[0]);
    let mut names = Vec::new();
    let mut x = Vec::new();
    if let Some(t) = &spec.treatment {
        names.push(t.clone());
        x.push(take(numeric[1]));
    }
    if !spec.absorb {
        names.push(INTERCEPT.to_string());
        x.push(vec![1.0; rows.len()]);
        if spec.interact_with_marital {
            names.push(spec.marital.clone());
            x.push(m.clone());
        }
    }
    let first_control = 1 + usize::from(spec.treatment.is_some());
    for (name, col) in numeric_names[first_control..].iter().zip(&numeric[first_control..]) {
        let v = take(col);
        let interaction = spec.interact_with_marital.then(|| v.iter().zip(&m).map(|(a, b)| a * b).collect::<Vec<f64>>());
        names.push(name.to_string());
        x.push(v);
        if let Some(iv) = interaction {
            names.push(format!("{name}#{}", spec.marital));
            x.push(iv);
        }
    }
    if !spec.absorb {
        for f in &absorbed {
            for level in 1..f.n_levels() as u32 {
                names.push(format!("{}={}", f.name, f.levels[level as usize]));
                x.push(f.codes.iter().map(|&c| if c == level { 1.0 } else { 0.0 }).collect());
            }
        }
        absorbed.clear();
    }
    ledger.sort_by_key(|e| e.row);
    Ok(DesignMatrix {
        outcome: spec.outcome.clone(),
        y_raw: y.clone(),
        y,
        names,
        x,
        weights: take(&weights),
        clusters: cluster.codes,
        n_clusters: cluster.levels.len(),
        absorbed,
        absorbed_dof: None,
        y_absorbed: false,
        pre_norms: Vec::new(),
        period,
        rows,
        ledger,
    })
}

pub fn build_design(frame: &Frame, spec: &RegressionSpec) -> Result<DesignMatrix, EstimationError> {
    build_design_on(frame, spec, None)
}
