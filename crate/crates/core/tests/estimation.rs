//! Least-squares fits, clustered covariance and invariances against dense oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simelig::estimation::*;

mod support;
use support::fit_oracle::*;

#[test]
fn exact_linear_relation_gives_unit_r2() {
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 + 1.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64).collect();
    let clusters: Vec<u32> = (0..20).map(|i| i % 4).collect();
    let d = DesignMatrix::from_columns("y", y, vec![("x".into(), x)], w, &clusters).unwrap();
    let f = wls_fit(&d).unwrap();
    assert!((f.coef("x").unwrap() - 2.0).abs() < 1e-14);
    assert!((f.adj_r2 - 1.0).abs() < 1e-14);
}

#[test]
fn ten_row_fit_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 10;
    let cols: Vec<Vec<f64>> = (0..3).map(|j| (0..n).map(|_| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) }).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let clusters: Vec<u32> = (0..n as u32).map(|i| i % 3).collect();
    let d = DesignMatrix::from_columns("y", y.clone(), vec![("c".into(), cols[0].clone()), ("a".into(), cols[1].clone()), ("b".into(), cols[2].clone())], w.clone(), &clusters).unwrap();
    let f = wls_fit(&d).unwrap();
    let xm = design_to_dense(&d);
    let wd = DMatrix::from_diagonal(&DVector::from_vec(w));
    let beta = (xm.transpose() * &wd * &xm).try_inverse().unwrap() * xm.transpose() * &wd * DVector::from_vec(y);
    for j in 0..3 {
        assert!((f.coefficients[j] - beta[j]).abs() < 1e-12, "{} vs {}", f.coefficients[j], beta[j]);
    }
}

#[test]
fn equal_weights_match_unweighted() {
    let p = panel(300, 4, 3, 1);
    let mut s = spec();
    s.weight = None;
    let mut a = build_design(&p.frame, &s).unwrap();
    let fa = fit(&mut a, &opts()).unwrap();
    let mut frame = p.frame.clone();
    frame.add_numeric("w2", vec![2.5; 300]);
    s.weight = Some("w2".into());
    let mut b = build_design(&frame, &s).unwrap();
    let fb = fit(&mut b, &opts()).unwrap();
    for (x, y) in fa.coefficients.iter().zip(&fb.coefficients) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn absorbed_matches_full_dummy_without_marital() {
    let p = panel(200, 5, 4, 2);
    let mut s = spec();
    s.interact_with_marital = false;
    s.state_controls.clear();
    let mut s2 = s.clone();
    s2.absorb = false;
    let dummy = build_design(&p.frame, &s2).unwrap();
    let xm = design_to_dense(&dummy);
    let (beta, _, _) = oracle_wls(&xm, &DVector::from_vec(dummy.y.clone()), &dummy.weights);
    let mut both = build_design(&p.frame, &s).unwrap();
    let f = fit(&mut both, &opts()).unwrap();
    for term in ["simt", "x1"] {
        let j = dummy.names.iter().position(|n| n == term).unwrap();
        assert!((f.coef(term).unwrap() - beta[j]).abs() < 1e-8, "{term}: {} vs {}", f.coef(term).unwrap(), beta[j]);
    }
}

#[test]
fn absorbed_matches_full_dummy_all_models_with_marital() {
    let p = panel(1500, 4, 4, 3);
    for model in Model::ALL {
        let mut s = spec();
        s.model = model;
        let mut absorbed = build_design(&p.frame, &s).unwrap();
        let f = fit(&mut absorbed, &opts()).unwrap();
        s.absorb = false;
        let dummy = build_design(&p.frame, &s).unwrap();
        assert_eq!(dummy.rows, absorbed.rows);
        let xm = design_to_dense(&dummy);
        let (beta, resid, _) = oracle_wls(&xm, &DVector::from_vec(dummy.y.clone()), &dummy.weights);
        let fd = wls_fit(&dummy).unwrap();
        for term in f.terms.iter() {
            let j = dummy.names.iter().position(|n| n == term).unwrap();
            assert!((f.coef(term).unwrap() - beta[j]).abs() < 1e-8, "model {model:?} {term}");
            assert!((fd.coef(term).unwrap() - beta[j]).abs() < 1e-8, "model {model:?} dummy path {term}");
        }
        let ssr: f64 = resid.iter().zip(&dummy.weights).map(|(e, w)| w * e * e).sum();
        let ssr_abs: f64 = {
            let mut e = absorbed.y.clone();
            for (t, b) in f.terms.iter().zip(&f.coefficients) {
                let j = absorbed.names.iter().position(|n| n == t).unwrap();
                for (ei, xi) in e.iter_mut().zip(&absorbed.x[j]) {
                    *ei -= b * xi;
                }
            }
            e.iter().zip(&absorbed.weights).map(|(e, w)| w * e * e).sum()
        };
        assert!((ssr - ssr_abs).abs() < 1e-8 * ssr, "model {model:?} SSR");
    }
}

#[test]
fn cr1_matches_brute_force_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 30;
    let cols: Vec<Vec<f64>> = (0..3).map(|j| (0..n).map(|_| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) }).collect()).collect();
    let y: Vec<f64> = (0..n).map(|i| cols[1][i] * 0.7 + rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let clusters: Vec<u32> = (0..n as u32).map(|i| i / 10).collect();
    let named = vec![("c".to_string(), cols[0].clone()), ("a".to_string(), cols[1].clone()), ("b".to_string(), cols[2].clone())];
    let d = DesignMatrix::from_columns("y", y.clone(), named, w.clone(), &clusters).unwrap();
    let f = wls_fit(&d).unwrap();
    let xm = design_to_dense(&d);
    let (_, resid, bread) = oracle_wls(&xm, &DVector::from_vec(y), &w);
    let v = oracle_cr1(&xm, &resid, &w, &clusters, &bread, 3);
    for i in 0..3 {
        for j in 0..3 {
            assert!((f.covariance[i][j] - v[(i, j)]).abs() < 1e-10, "({i},{j})");
        }
    }
}

#[test]
fn singleton_clusters_equal_hc0_times_cr1() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 12;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.random_range(-1.0..1.0)).collect();
    let w = vec![1.0; n];
    let clusters: Vec<u32> = (0..n as u32).collect();
    let d = DesignMatrix::from_columns("y", y.clone(), vec![("c".into(), vec![1.0; n]), ("x".into(), x.clone())], w.clone(), &clusters).unwrap();
    let f = wls_fit(&d).unwrap();
    let xm = design_to_dense(&d);
    let (_, resid, bread) = oracle_wls(&xm, &DVector::from_vec(y), &w);
    let mut meat = DMatrix::<f64>::zeros(2, 2);
    for i in 0..n {
        let xi = xm.row(i).transpose();
        meat += &xi * xi.transpose() * resid[i] * resid[i];
    }
    let hc0 = &bread * meat * &bread;
    let c = cr1_factor(n, n, 2);
    for i in 0..2 {
        for j in 0..2 {
            assert!((f.covariance[i][j] - hc0[(i, j)] * c).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_residuals_give_zero_covariance() {
    let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    let clusters: Vec<u32> = (0..12).map(|i| i % 3).collect();
    let d = DesignMatrix::from_columns("y", y, vec![("c".into(), vec![1.0; 12]), ("x".into(), x)], vec![1.0; 12], &clusters).unwrap();
    let f = wls_fit(&d).unwrap();
    for row in &f.covariance {
        for v in row {
            assert!(v.abs() < 1e-20);
        }
    }
}

#[test]
fn weight_scaling_and_permutation_invariance() {
    let p = panel(800, 5, 4, 4);
    let s = spec();
    let mut d = build_design(&p.frame, &s).unwrap();
    let base = fit(&mut d, &opts()).unwrap();

    let mut scaled = p.frame.clone();
    let w: Vec<f64> = scaled.numeric("weight").unwrap().iter().map(|w| w * 7.3).collect();
    scaled.add_numeric("weight", w);
    let mut d2 = build_design(&scaled, &s).unwrap();
    let f2 = fit(&mut d2, &opts()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut perm: Vec<usize> = (0..800).collect();
    for i in (1..perm.len()).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut permuted = Frame::new(800);
    for (name, col) in &p.frame.columns {
        if let Column::Num(v) = col {
            permuted.add_numeric(name, perm.iter().map(|&i| v[i]).collect());
        }
    }
    let mut d3 = build_design(&permuted, &s).unwrap();
    let f3 = fit(&mut d3, &opts()).unwrap();
    for other in [&f2, &f3] {
        assert_eq!(other.terms, base.terms);
        for i in 0..base.terms.len() {
            assert!((other.coefficients[i] - base.coefficients[i]).abs() < 1e-12, "coef {}", base.terms[i]);
            assert!((other.std_errors[i] - base.std_errors[i]).abs() < 1e-12, "se {}", base.terms[i]);
        }
        assert!((other.r2 - base.r2).abs() < 1e-12);
        assert!((other.adj_r2 - base.adj_r2).abs() < 1e-12);
    }
}
