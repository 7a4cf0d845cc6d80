//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `½βᵀGβ − cᵀβ + μ Σ ω|β|` (constant term dropped).
pub fn lasso_objective(g: &DMatrix<f64>, c: &DVector<f64>, w: &[f64], mu: f64, beta: &DVector<f64>) -> f64 {
    let pen: f64 = beta.iter().zip(w).filter(|(b, _)| **b != 0.0).map(|(b, w)| w * b.abs()).sum();
    0.5 * beta.dot(&(g * beta)) - c.dot(beta) + mu * pen
}

/// Exact weighted-lasso solution for small `p` by enumerating all `3^p` sign
/// patterns: each pattern fixes the stationarity system on its support, and a
/// candidate is kept only if its signs and the inactive subgradient bounds hold.
/// Returns the feasible candidate with the smallest objective.
pub fn sign_enumeration_oracle(g: &DMatrix<f64>, c: &DVector<f64>, w: &[f64], mu: f64) -> DVector<f64> {
    let p = c.len();
    assert!(p <= 8, "enumeration is exponential in p");
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(p as u32);
    for code in 0..total {
        let mut signs = vec![0.0; p];
        let mut rest = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][rest % 3];
            rest /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&k| signs[k] != 0.0).collect();
        if support.iter().any(|&k| !w[k].is_finite()) {
            continue;
        }
        let mut beta = DVector::zeros(p);
        if !support.is_empty() {
            let s = support.len();
            let gs = DMatrix::from_fn(s, s, |a, b| g[(support[a], support[b])]);
            let rhs = DVector::from_fn(s, |a, _| c[support[a]] - mu * w[support[a]] * signs[support[a]]);
            let Some(sol) = gs.lu().solve(&rhs) else { continue };
            if (0..s).any(|a| sol[a] * signs[support[a]] <= 0.0) {
                continue;
            }
            for (a, &k) in support.iter().enumerate() {
                beta[k] = sol[a];
            }
        }
        let grad = g * &beta - c;
        let feasible = (0..p).all(|k| signs[k] != 0.0 || !w[k].is_finite() || grad[k].abs() <= mu * w[k] + 1e-9);
        if !feasible {
            continue;
        }
        let obj = lasso_objective(g, c, w, mu, &beta);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, beta));
        }
    }
    best.expect("a strictly convex problem has a solution").1
}

/// Random positive-definite Gram matrix `AᵀA/m + ridge·I` with its linear term.
pub fn random_problem(p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = p + 3;
    let a = DMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0_f64..1.0));
    let g = a.tr_mul(&a) / m as f64 + DMatrix::identity(p, p) * 0.05;
    let c = DVector::from_fn(p, |_, _| rng.random_range(-1.0_f64..1.0));
    (g, c)
}

/// Brute-force double-centred distance correlation.
pub fn dcor_bruteforce(u: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = y.len();
    let dist_u = DMatrix::from_fn(n, n, |i, j| (u.row(i) - u.row(j)).norm());
    let dist_y = DMatrix::from_fn(n, n, |i, j| (y[i] - y[j]).abs());
    let centre = |d: &DMatrix<f64>| {
        let rm: Vec<f64> = (0..n).map(|i| d.row(i).sum() / n as f64).collect();
        let cm: Vec<f64> = (0..n).map(|j| d.column(j).sum() / n as f64).collect();
        let gm = d.sum() / (n * n) as f64;
        DMatrix::from_fn(n, n, |i, j| d[(i, j)] - rm[i] - cm[j] + gm)
    };
    let (a, b) = (centre(&dist_u), centre(&dist_y));
    let nn = (n * n) as f64;
    let v_ab = a.component_mul(&b).sum() / nn;
    let v_aa = a.component_mul(&a).sum() / nn;
    let v_bb = b.component_mul(&b).sum() / nn;
    if v_aa <= 0.0 || v_bb <= 0.0 {
        return 0.0;
    }
    (v_ab.max(0.0) / (v_aa * v_bb).sqrt()).sqrt()
}
