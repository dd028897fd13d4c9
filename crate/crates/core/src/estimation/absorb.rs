//! Fixed-effect absorption by alternating weighted projections.
//!
//! A sweep subtracts the weighted group mean of every factor in turn, then
//! of every factor again in reverse order. That operator fixes the
//! residual and contracts the fixed-effect part, and it is symmetric in the
//! weighted inner product, so the fixed-effect part is found by conjugate
//! gradients on (I - sweep) rather than by repeating sweeps, which can take
//! thousands of passes on crossed designs. A column has converged when one
//! sweep of the current residual moves no element by more than the
//! tolerance. Columns are independent and run in parallel; each column is
//! processed sequentially, so results do not depend on the number of
//! threads.

use rayon::prelude::*;

use super::design::{fixed_effect_dof, DesignMatrix};
use super::frame::Factor;
use super::EstimationError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbOptions {
    /// Largest change of any element over a sweep, relative to
    /// max(1, largest absolute value of the column), at which a column is
    /// considered converged.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions { tolerance: 1e-10, max_iterations: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbReport {
    /// Most sweeps used by any column.
    pub sweeps: usize,
    pub dof: usize,
}

struct Sweeper<'a> {
    factors: &'a [Factor],
    weights: &'a [f64],
    totals: Vec<Vec<f64>>,
}

impl<'a> Sweeper<'a> {
    fn new(factors: &'a [Factor], weights: &'a [f64]) -> Self {
        let totals = factors
            .iter()
            .map(|f| {
                let mut t = vec![0.0; f.n_levels()];
                for (&c, &w) in f.codes.iter().zip(weights) {
                    t[c as usize] += w;
                }
                t
            })
            .collect();
        Sweeper { factors, weights, totals }
    }

    /// Demeans `z` by one factor. Group means are taken around the first
    /// value seen in the group, so a column constant within groups becomes
    /// exactly zero.
    fn project(&self, k: usize, z: &mut [f64], scratch: &mut Scratch) {
        let (f, totals) = (&self.factors[k], &self.totals[k]);
        let Scratch { anchor, sums } = scratch;
        anchor.clear();
        anchor.resize(f.n_levels(), f64::NAN);
        sums.clear();
        sums.resize(f.n_levels(), 0.0);
        for ((&c, &v), &w) in f.codes.iter().zip(z.iter()).zip(self.weights) {
            let g = c as usize;
            if anchor[g].is_nan() {
                anchor[g] = v;
            }
            sums[g] += w * (v - anchor[g]);
        }
        for (g, s) in sums.iter_mut().enumerate() {
            *s = if totals[g] > 0.0 { anchor[g] + *s / totals[g] } else { anchor[g] };
        }
        for (&c, v) in f.codes.iter().zip(z.iter_mut()) {
            *v -= sums[c as usize];
        }
    }

    /// Forward then backward pass over the factors.
    fn sweep(&self, z: &mut [f64], scratch: &mut Scratch) {
        let k = self.factors.len();
        for i in (0..k).chain((0..k.saturating_sub(1)).rev()) {
            self.project(i, z, scratch);
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(self.weights).map(|((x, y), w)| w * x * y).sum()
    }

    /// `z - sweep(z)` into `out`.
    fn step(&self, z: &[f64], out: &mut [f64], tmp: &mut Vec<f64>, scratch: &mut Scratch) {
        tmp.clear();
        tmp.extend_from_slice(z);
        self.sweep(tmp, scratch);
        for ((o, &a), &b) in out.iter_mut().zip(z).zip(tmp.iter()) {
            *o = a - b;
        }
    }

    /// Residualizes `z` in place; returns the number of sweeps.
    fn demean(&self, z: &mut [f64], opts: &AbsorbOptions) -> Result<usize, f64> {
        let mut scratch = Scratch::default();
        if self.factors.len() == 1 {
            self.project(0, z, &mut scratch);
            return Ok(1);
        }
        let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = opts.tolerance * scale;
        let n = z.len();
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (mut r, mut p, mut ap, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], Vec::with_capacity(n));
        let mut sweeps = 0;
        // Restart from the true residual whenever the recursive one says
        // the column has converged, so rounding drift cannot end early.
        loop {
            self.step(z, &mut r, &mut tmp, &mut scratch);
            sweeps += 1;
            let change = max_abs(&r);
            if change <= tol {
                return Ok(sweeps);
            }
            if sweeps >= opts.max_iterations {
                return Err(change);
            }
            p.copy_from_slice(&r);
            let mut rr = self.dot(&r, &r);
            while sweeps < opts.max_iterations {
                self.step(&p, &mut ap, &mut tmp, &mut scratch);
                sweeps += 1;
                let pap = self.dot(&p, &ap);
                if !(pap > 0.0) {
                    break;
                }
                let alpha = rr / pap;
                for ((v, &pi), (ri, &api)) in z.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
                    *v -= alpha * pi;
                    *ri -= alpha * api;
                }
                if max_abs(&r) <= tol {
                    break;
                }
                let rr_next = self.dot(&r, &r);
                let beta = rr_next / rr;
                rr = rr_next;
                for (pi, &ri) in p.iter_mut().zip(&r) {
                    *pi = ri + beta * *pi;
                }
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    anchor: Vec<f64>,
    sums: Vec<f64>,
}

fn weighted_norm(col: &[f64], w: &[f64]) -> f64 {
    col.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
}

/// Residualizes the outcome and regressors on the design's absorbed
/// factors.
pub fn absorb_fixed_effects(design: &mut DesignMatrix, opts: &AbsorbOptions) -> Result<AbsorbReport, EstimationError> {
    if design.absorbed.is_empty() {
        design.absorbed_dof = Some(0);
        design.y_absorbed = true;
        return Ok(AbsorbReport { sweeps: 0, dof: 0 });
    }
    let sweeper = Sweeper::new(&design.absorbed, &design.weights);
    let fail = |name: &str, change: f64| EstimationError::NotConverged {
        column: name.to_string(),
        iterations: opts.max_iterations,
        last_change: change,
    };
    let mut sweeps = 0;
    if design.absorbed_dof.is_none() {
        design.pre_norms = design.x.iter().map(|c| weighted_norm(c, &design.weights)).collect();
        let results: Vec<Result<usize, f64>> = design.x.par_iter_mut().map(|col| sweeper.demean(col, opts)).collect();
        for (r, name) in results.into_iter().zip(&design.names) {
            sweeps = sweeps.max(r.map_err(|c| fail(name, c))?);
        }
        let zero = design.x.iter().all(|c| c.iter().all(|&v| v == 0.0));
        if zero && !design.x.is_empty() {
            return Err(EstimationError::Degenerate("every regressor is absorbed by the fixed effects".into()));
        }
        design.absorbed_dof = Some(fixed_effect_dof(&design.absorbed));
    }
    if !design.y_absorbed {
        sweeps = sweeps.max(sweeper.demean(&mut design.y, opts).map_err(|c| fail(&design.outcome, c))?);
        design.y_absorbed = true;
    }
    Ok(AbsorbReport { sweeps, dof: design.absorbed_dof.expect("set above") })
}
