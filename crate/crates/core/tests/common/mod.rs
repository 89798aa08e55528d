//! Independent oracles for the integration tests. Nothing here calls into
//! the fitting or variance code of the crate under test.
#![allow(dead_code, clippy::needless_range_loop)]

use equipoise::variance::EstimatingStack;
use equipoise::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian elimination with partial pivoting on a dense row-major copy.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        assert!(m[col][col].abs() > 1e-300, "singular system");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Plain Newton root-finding on Σ(z − e)v = 0, from β = 0, no line search.
pub fn newton_logistic(rows: &[Vec<f64>], z: &[u8]) -> Vec<f64> {
    let p = rows[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let mut score = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for (v, &zi) in rows.iter().zip(z) {
            let e = sigmoid(v.iter().zip(&beta).map(|(a, b)| a * b).sum());
            for j in 0..p {
                score[j] += (zi as f64 - e) * v[j];
                for k in 0..p {
                    info[j][k] += e * (1.0 - e) * v[j] * v[k];
                }
            }
        }
        let step = gauss_solve(&info, &score);
        for j in 0..p {
            beta[j] += step[j];
        }
        if step.iter().all(|s| s.abs() < 1e-14) {
            break;
        }
    }
    beta
}

/// Normal equations X'X α = X'y by elimination.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in rows.iter().zip(y) {
        for j in 0..p {
            xty[j] += r[j] * yi;
            for k in 0..p {
                xtx[j][k] += r[j] * r[k];
            }
        }
    }
    gauss_solve(&xtx, &xty)
}

/// Central difference of a scalar function of one variable.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// −N⁻¹ Σ ∂ψ_i/∂θ' by central differences in each coordinate of θ.
pub fn numerical_bread<S: EstimatingStack>(stack: &S, h: f64) -> DMatrix<f64> {
    let theta = stack.theta_hat().clone();
    let k = theta.len();
    let n = stack.n_units();
    let mean_psi = |t: &DVector<f64>| {
        let mut s = DVector::zeros(k);
        for i in 0..n {
            s += stack.psi(i, t);
        }
        s / n as f64
    };
    let mut a = DMatrix::zeros(k, k);
    for j in 0..k {
        let step = h * (1.0 + theta[j].abs());
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[j] += step;
        dn[j] -= step;
        let col = (mean_psi(&up) - mean_psi(&dn)) / (2.0 * step);
        a.set_column(j, &(-col));
    }
    a
}

/// Logistic-treatment fixture with three covariates. `spread` scales the
/// propensity coefficients, so larger values mean worse overlap.
pub fn fixture(n: usize, seed: u64, spread: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, 3);
    let mut z: Vec<f64> = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    loop {
        z.clear();
        y.clear();
        for i in 0..n {
            let x1: f64 = StandardNormal.sample(&mut rng);
            let x2: f64 = StandardNormal.sample(&mut rng);
            let x3 = if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
            x[(i, 0)] = x1;
            x[(i, 1)] = x2;
            x[(i, 2)] = x3;
            let e = sigmoid(spread * (0.2 + 0.8 * x1 - 0.6 * x2 + 0.5 * x3));
            let zi = f64::from(u8::from(rng.random::<f64>() < e));
            let eps: f64 = StandardNormal.sample(&mut rng);
            y.push(1.0 + x1 + 0.5 * x2 - x3 + zi * (2.0 + 0.5 * x1) + eps);
            z.push(zi);
        }
        let t = z.iter().filter(|&&v| v == 1.0).count();
        if t > 3 && t + 3 < n {
            break;
        }
    }
    Dataset::new(&z, y, x, vec!["X1".into(), "X2".into(), "X3".into()]).unwrap()
}

/// Design rows [1, x...] for the covariates of `ds`.
pub fn design_rows(ds: &Dataset) -> Vec<Vec<f64>> {
    let x = ds.covariates();
    (0..ds.n_units())
        .map(|i| {
            std::iter::once(1.0)
                .chain(x.row(i).iter().copied())
                .collect()
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}
