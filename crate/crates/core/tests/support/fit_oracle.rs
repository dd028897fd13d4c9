//! Dense WLS and brute-force sandwich oracles, plus a synthetic panel.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use simelig::estimation::*;

/// Dense WLS through the SVD pseudo-inverse of X'WX. Returns coefficients,
/// residuals and the bread.
pub fn oracle_wls(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let wd = DMatrix::from_diagonal(&DVector::from_column_slice(w));
    let xtwx = x.transpose() * &wd * x;
    let bread = xtwx.pseudo_inverse(1e-9).unwrap();
    let beta = &bread * x.transpose() * &wd * y;
    let resid = y - x * &beta;
    (beta, resid, bread)
}

/// Sandwich by explicit loops over clusters and rows.
pub fn oracle_cr1(x: &DMatrix<f64>, resid: &DVector<f64>, w: &[f64], clusters: &[u32], bread: &DMatrix<f64>, n_params: usize) -> DMatrix<f64> {
    let k = x.ncols();
    let n = x.nrows();
    let g_count = *clusters.iter().max().unwrap() as usize + 1;
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for g in 0..g_count {
        let mut s = DVector::<f64>::zeros(k);
        for i in 0..n {
            if clusters[i] as usize == g {
                for j in 0..k {
                    s[j] += x[(i, j)] * w[i] * resid[i];
                }
            }
        }
        meat += &s * s.transpose();
    }
    let g = g_count as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - n_params as f64);
    bread * meat * bread * c
}

pub struct Panel {
    pub frame: Frame,
}

pub fn panel(n: usize, states: usize, years: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut cols: Vec<(&str, Vec<f64>)> = ["y", "simt", "x1", "sc1", "state", "year", "youngest_age", "oldest_age", "age_gap", "married", "weight", "race"]
        .iter()
        .map(|c| (*c, Vec::with_capacity(n)))
        .collect();
    let state_effect: Vec<f64> = (0..states).map(|_| noise.sample(&mut rng)).collect();
    let sc: Vec<Vec<f64>> = (0..states).map(|_| (0..years).map(|_| noise.sample(&mut rng)).collect()).collect();
    for _ in 0..n {
        let s = rng.random_range(0..states);
        let t = rng.random_range(0..years);
        let young = rng.random_range(0..6u32);
        let old = young + rng.random_range(0..4u32);
        let married = f64::from(rng.random_bool(0.5));
        let simt = rng.random_range(0.0..2.0) + 0.1 * t as f64;
        let x1 = noise.sample(&mut rng);
        let y = 1.5 * simt + 0.3 * x1 + state_effect[s] + 0.2 * t as f64 + 0.1 * young as f64 + 0.5 * married + noise.sample(&mut rng);
        let vals = [
            y,
            simt,
            x1,
            sc[s][t],
            s as f64,
            1990.0 + t as f64,
            young as f64,
            old as f64,
            (old - young) as f64,
            married,
            rng.random_range(0.5..2.0),
            rng.random_range(0..3u32) as f64,
        ];
        for (c, v) in cols.iter_mut().zip(vals) {
            c.1.push(v);
        }
    }
    let mut frame = Frame::new(n);
    for (name, v) in cols {
        frame.add_numeric(name, v);
    }
    Panel { frame }
}

pub fn spec() -> RegressionSpec {
    let mut s = RegressionSpec::new("y");
    s.controls = vec!["x1".into()];
    s.state_controls = vec!["sc1".into()];
    s
}

pub fn opts() -> AbsorbOptions {
    AbsorbOptions::default()
}

pub fn design_to_dense(d: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(d.n_obs(), d.x.len(), |i, j| d.x[j][i])
}

