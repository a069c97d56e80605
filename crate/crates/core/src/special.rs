//! Small special-function helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation for large `z`.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

pub fn ln_factorial(n: u32) -> f64 {
    libm::lgamma(f64::from(n) + 1.0)
}

/// `ln C(n, k)`; `k > n` is the caller's problem.
pub fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Table of `ln k!` for `k = 0..=n`.
pub fn ln_factorial_table(n: u32) -> Vec<f64> {
    let mut table = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for k in 1..=n {
        acc += f64::from(k).ln();
        table.push(acc);
    }
    table
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-13);
        assert!((norm_sf(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-13);
    }

    #[test]
    fn factorial_table_matches_lgamma() {
        let t = ln_factorial_table(60);
        for (k, v) in t.iter().enumerate() {
            assert!((v - ln_factorial(k as u32)).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16, 256] {
            let (x, w) = gauss_legendre(n, 0.0, 2.0);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-12, "n = {n}");
            if n >= 3 {
                // ∫_0^2 x^4 dx = 32/5
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
                assert!((q - 6.4).abs() < 1e-11, "n = {n}: {q}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_gaussian() {
        let (x, w) = gauss_legendre(64, -8.0, 8.0);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * norm_pdf(*x)).sum();
        assert!((q - 1.0).abs() < 1e-12);
    }
}
