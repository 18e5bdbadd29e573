//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use brm_core::CovModel;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal tail by complementary error function, kept apart from the
/// library's own helper.
pub fn phi_bar(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(exists t <= T: B(t) - c t > b)` for standard Brownian motion.
pub fn drifted_passage(b: f64, c: f64, t: f64) -> f64 {
    let st = t.sqrt();
    phi_bar((b + c * t) / st) + (-2.0 * c * b).exp() * phi_bar((b - c * t) / st)
}

/// Composite Simpson rule on `[lo, hi]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// `P(X > x0, Y > y0)` for unit-variance normals with correlation `rho`.
pub fn bivariate_survival(rho: f64, x0: f64, y0: f64) -> f64 {
    let s = (1.0 - rho * rho).sqrt();
    simpson(|x| phi(x) * phi_bar((y0 - rho * x) / s), x0, x0 + 40.0, 20_000)
}

/// Random mixing matrix with entries N(0, 1), redrawn until `Gamma Gamma^T`
/// has condition number below `1e6`.
pub fn random_model(rng: &mut ChaCha8Rng, d: usize) -> CovModel {
    loop {
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = &g * g.transpose();
        let ev = sigma.clone().symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        if lo > 0.0 && hi / lo < 1e6 {
            if let Ok(m) = CovModel::from_gamma(g) {
                return m;
            }
        }
    }
}

/// Thresholds in `[-1, 2)` with at least one positive entry.
pub fn random_a(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
        if a.iter().any(|&x| x > 0.0) {
            return a;
        }
    }
}

/// Sum of products with Neumaier-compensated error terms from fused
/// multiply-add.
pub fn exact_dot(terms: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &(x, y) in terms {
        let p = x * y;
        comp += x.mul_add(y, -p);
        let t = sum + p;
        comp += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
        sum = t;
    }
    sum + comp
}

pub struct QpOracle {
    pub index_i: Vec<usize>,
    pub a_tilde: Vec<f64>,
    pub value: f64,
}

/// Brute force over all index sets: keep the Karush-Kuhn-Tucker points
/// (`Sigma_II lambda = a_I`, `lambda > 0`, `(Sigma lambda)_J >= a_J`) and return the
/// one with the smallest objective. Uses LU rather than Cholesky.
pub fn qp_oracle(sigma: &DMatrix<f64>, a: &[f64]) -> QpOracle {
    let d = a.len();
    let mut best: Option<QpOracle> = None;
    for mask in 1u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|i| mask >> i & 1 == 1).collect();
        let m = idx.len();
        let sub = DMatrix::from_fn(m, m, |r, c| sigma[(idx[r], idx[c])]);
        let rhs = nalgebra::DVector::from_iterator(m, idx.iter().map(|&i| a[i]));
        let lu = sub.clone().lu();
        let Some(mut lambda) = lu.solve(&rhs) else { continue };
        // refinement with residuals accumulated exactly
        for _ in 0..2 {
            let r = nalgebra::DVector::from_fn(m, |i, _| {
                let mut terms: Vec<(f64, f64)> = (0..m).map(|j| (-sub[(i, j)], lambda[j])).collect();
                terms.push((rhs[i], 1.0));
                exact_dot(&terms)
            });
            if let Some(corr) = lu.solve(&r) {
                lambda += corr;
            }
        }
        if lambda.iter().any(|&l| l <= 1e-12) {
            continue;
        }
        let x: Vec<f64> = (0..d)
            .map(|r| idx.iter().zip(lambda.iter()).map(|(&i, l)| sigma[(r, i)] * l).sum())
            .collect();
        if (0..d).any(|j| x[j] < a[j] - 1e-9) {
            continue;
        }
        let value = exact_dot(&idx.iter().zip(lambda.iter()).map(|(&i, l)| (a[i], *l)).collect::<Vec<_>>());
        if best.as_ref().is_none_or(|b| value < b.value - 1e-12) {
            best = Some(QpOracle {
                index_i: idx,
                a_tilde: x,
                value,
            });
        }
    }
    best.expect("a strictly convex program has a KKT point")
}
