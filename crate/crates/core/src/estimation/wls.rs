//! Weighted least squares with state-clustered (CR1) covariance.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::absorb::{absorb_fixed_effects, AbsorbOptions};
use super::design::DesignMatrix;
use super::EstimationError;

/// Relative pivot tolerance for dropping collinear columns.
pub const COLLINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub outcome: String,
    /// Retained terms, in design order.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Row-major, aligned with `terms`.
    pub covariance: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub mean_y_baseline: f64,
    pub mean_y_overall: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Parameters counted in degrees-of-freedom corrections: retained terms
    /// plus absorbed levels.
    pub n_params: usize,
    pub absorbed_dof: usize,
    pub dropped_collinear: Vec<String>,
    pub sweeps: usize,
}

impl FitResult {
    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coef(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.coefficients[i])
    }

    pub fn se(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.std_errors[i])
    }

    pub fn t_stat(&self, term: &str) -> Option<f64> {
        self.index(term).map(|i| self.coefficients[i] / self.std_errors[i])
    }

    /// Two-sided p-value from a t distribution with clusters − 1 degrees of
    /// freedom.
    pub fn p_value(&self, term: &str) -> Option<f64> {
        let t = self.t_stat(term)?;
        Some(p_value(t, self.n_clusters))
    }

    /// Coefficient table as CSV: term, coefficient, SE, t, p, stars.
    pub fn write_coefficients(&self, path: &Path) -> Result<(), EstimationError> {
        let io = |e: csv::Error| EstimationError::Io { path: path.to_path_buf(), message: e.to_string() };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["outcome", "term", "coefficient", "std_error", "t", "p", "stars"]).map_err(io)?;
        for (i, term) in self.terms.iter().enumerate() {
            let (b, se) = (self.coefficients[i], self.std_errors[i]);
            let p = p_value(b / se, self.n_clusters);
            w.write_record([&self.outcome, term, &b.to_string(), &se.to_string(), &(b / se).to_string(), &p.to_string(), stars(p)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| EstimationError::Io { path: path.to_path_buf(), message: e.to_string() })
    }
}

pub fn p_value(t: f64, n_clusters: usize) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let df = (n_clusters.max(2) - 1) as f64;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Significance marks at the 10, 5 and 1 percent levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Modified Gram–Schmidt with one reorthogonalization pass on the
/// weight-scaled columns; a column is dropped when its remaining norm is
/// below the tolerance times its reference norm, so the leftmost of any
/// collinear set survives.
struct Qr {
    q: Vec<Vec<f64>>,
    r: DMatrix<f64>,
    kept: Vec<usize>,
}

fn qr_leftmost(cols: &[Vec<f64>], reference: &[f64]) -> Qr {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        let mut v = col.clone();
        let mut coeffs = vec![0.0; q.len()];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let c = dot(qk, &v);
                coeffs[k] += c;
                axpy(-c, qk, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if reference[j] == 0.0 || norm <= COLLINEAR_TOLERANCE * reference[j] {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        coeffs.push(norm);
        q.push(v);
        r_cols.push(coeffs);
        kept.push(j);
    }
    let k = kept.len();
    let mut r = DMatrix::zeros(k, k);
    for (j, c) in r_cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            r[(i, j)] = v;
        }
    }
    Qr { q, r, kept }
}

/// Fits the design by weighted least squares. Absorbed factors must already
/// have been residualized out.
pub fn wls_fit(design: &DesignMatrix) -> Result<FitResult, EstimationError> {
    let n = design.n_obs();
    if n == 0 {
        return Err(EstimationError::EmptySample);
    }
    if !design.absorbed.is_empty() && (design.absorbed_dof.is_none() || !design.y_absorbed) {
        return Err(EstimationError::NotAbsorbed);
    }
    let w = &design.weights;
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(EstimationError::Degenerate("weights must be finite and non-negative".into()));
    }
    let w_total: f64 = w.iter().sum();
    if w_total <= 0.0 {
        return Err(EstimationError::Degenerate("all weights are zero".into()));
    }
    if design.n_clusters < 2 {
        return Err(EstimationError::SingleCluster);
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let scaled: Vec<Vec<f64>> = design.x.iter().map(|c| c.iter().zip(&sw).map(|(a, b)| a * b).collect()).collect();
    let reference: Vec<f64> = if design.pre_norms.len() == design.x.len() {
        design.pre_norms.clone()
    } else {
        scaled.iter().map(|c| dot(c, c).sqrt()).collect()
    };
    let qr = qr_leftmost(&scaled, &reference);
    let k = qr.kept.len();
    let absorbed_dof = design.absorbed_dof.unwrap_or(0);
    let n_params = k + absorbed_dof;
    if n <= n_params {
        return Err(EstimationError::TooFewRows { rows: n, params: n_params });
    }

    let mut b: Vec<f64> = design.y.iter().zip(&sw).map(|(a, b)| a * b).collect();
    let mut qtb = vec![0.0; k];
    for _ in 0..2 {
        for (i, qi) in qr.q.iter().enumerate() {
            let c = dot(qi, &b);
            qtb[i] += c;
            axpy(-c, qi, &mut b);
        }
    }
    let r_inv = if k == 0 {
        DMatrix::zeros(0, 0)
    } else {
        qr.r.clone().try_inverse().ok_or_else(|| EstimationError::Degenerate("triangular factor is singular".into()))?
    };
    let beta_v = &r_inv * nalgebra::DVector::from_vec(qtb);
    let beta: Vec<f64> = beta_v.iter().copied().collect();

    let mut resid = design.y.clone();
    for (&j, &bj) in qr.kept.iter().zip(&beta) {
        axpy(-bj, &design.x[j], &mut resid);
    }

    // Bread (X'WX)^-1 = R^-1 R^-T; meat from per-cluster score sums.
    let bread = &r_inv * r_inv.transpose();
    let g = design.n_clusters;
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for (col, &j) in qr.kept.iter().enumerate() {
        let x = &design.x[j];
        for i in 0..n {
            scores[(design.clusters[i] as usize, col)] += x[i] * w[i] * resid[i];
        }
    }
    let meat = scores.transpose() * &scores;
    let factor = cr1_factor(g, n, n_params);
    let mut cov = &bread * meat * &bread * factor;
    for i in 0..k {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }

    let ssr: f64 = resid.iter().zip(w).map(|(e, w)| w * e * e).sum();
    let mean_y = weighted_mean(&design.y_raw, w, |_| true);
    let tss: f64 = design.y_raw.iter().zip(w).map(|(y, w)| w * (y - mean_y) * (y - mean_y)).sum();
    let r2 = if tss > 0.0 { 1.0 - ssr / tss } else { f64::NAN };
    let adj_r2 = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / (n - n_params) as f64;
    let mean_y_baseline = weighted_mean(&design.y_raw, w, |i| design.period[i] == 0);
    let kept_set: std::collections::BTreeSet<usize> = qr.kept.iter().copied().collect();
    Ok(FitResult {
        outcome: design.outcome.clone(),
        terms: qr.kept.iter().map(|&j| design.names[j].clone()).collect(),
        coefficients: beta,
        std_errors: (0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect(),
        covariance: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        r2,
        adj_r2,
        mean_y_baseline,
        mean_y_overall: mean_y,
        n_obs: n,
        n_clusters: g,
        n_params,
        absorbed_dof,
        dropped_collinear: (0..design.x.len()).filter(|j| !kept_set.contains(j)).map(|j| design.names[j].clone()).collect(),
        sweeps: 0,
    })
}

/// Small-sample factor G/(G−1) · (N−1)/(N−K).
pub fn cr1_factor(clusters: usize, n: usize, params: usize) -> f64 {
    let g = clusters as f64;
    g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - params as f64)
}

fn weighted_mean(y: &[f64], w: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let (mut s, mut t) = (0.0, 0.0);
    for i in 0..y.len() {
        if keep(i) {
            s += w[i] * y[i];
            t += w[i];
        }
    }
    s / t
}

/// Absorbs any pending factors, then fits.
pub fn fit(design: &mut DesignMatrix, opts: &AbsorbOptions) -> Result<FitResult, EstimationError> {
    let report = absorb_fixed_effects(design, opts)?;
    let mut result = wls_fit(design)?;
    result.sweeps = report.sweeps;
    Ok(result)
}
