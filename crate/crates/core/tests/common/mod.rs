#![allow(dead_code)]

use nalgebra::DMatrix;

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a few panels so narrow peaks are not missed.
    let panels = 16;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(fa, fm, fb, lo, hi);
            simpson_rec(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

pub fn normal_logpdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `KL(N(m1, s1^2) || N(m2, s2^2))` by quadrature over `m1 +- 14 s1`.
pub fn kl_quadrature(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    adaptive_simpson(
        |x| {
            let lp = normal_logpdf(x, m1, s1);
            lp.exp() * (lp - normal_logpdf(x, m2, s2))
        },
        m1 - 14.0 * s1,
        m1 + 14.0 * s1,
        1e-11,
    )
}

/// Exact negative-ELBO gradient for a mean-field `q = N(tau, diag e^{2 psi})`
/// against `N(0, P^{-1})`, up to constants
/// `1/2 tr(P (tau tau^T + S)) - sum psi`.
pub fn exact_mf_gradient(precision: &DMatrix<f64>, tau: &[f64], psi: &[f64]) -> Vec<f64> {
    let d = tau.len();
    let mut g = vec![0.0; 2 * d];
    for i in 0..d {
        g[i] = (0..d).map(|j| precision[(i, j)] * tau[j]).sum();
        g[d + i] = precision[(i, i)] * (2.0 * psi[i]).exp() - 1.0;
    }
    g
}

/// Minimize the exact mean-field negative ELBO by plain gradient descent.
pub fn gd_mf_optimum(precision: &DMatrix<f64>, iters: usize, lr: f64) -> (Vec<f64>, Vec<f64>) {
    let d = precision.nrows();
    let mut tau = vec![0.5; d];
    let mut psi = vec![0.0; d];
    for _ in 0..iters {
        let g = exact_mf_gradient(precision, &tau, &psi);
        for i in 0..d {
            tau[i] -= lr * g[i];
            psi[i] -= lr * g[d + i];
        }
    }
    (tau, psi)
}
