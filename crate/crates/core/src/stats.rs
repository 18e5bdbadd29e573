//! Monte Carlo summaries and a few scalar Gaussian helpers.

use serde::{Deserialize, Serialize};
use libm::erfc;

/// 97.5% standard normal quantile.
/// Dot product in twice the working precision: exact products by fused
/// multiply-add, exact partial sums, one rounding at the end.
pub fn dot2(x: &[f64], y: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for (a, b) in x.iter().zip(y) {
        let p = a * b;
        let ep = a.mul_add(*b, -p);
        let t = s + p;
        let z = t - s;
        c += ep + ((s - (t - z)) + (p - z));
        s = t;
    }
    s + c
}

pub const Z95: f64 = 1.959_963_984_540_054;

/// Upper tail `P(Z > x)` of a standard normal.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// First two raw moments of a batch of i.i.d. samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    /// Folds per-block moments (in the given order) with compensated sums.
    pub fn combine<'a>(blocks: impl IntoIterator<Item = &'a Moments>) -> Moments {
        let (mut n, mut s, mut s2) = (0u64, KahanSum::default(), KahanSum::default());
        for b in blocks {
            n += b.n;
            s.add(b.sum);
            s2.add(b.sum_sq);
        }
        Moments {
            n,
            sum: s.total(),
            sum_sq: s2.total(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean (unbiased variance).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// A Monte Carlo point estimate with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub n_rep: u64,
    pub seed: u64,
}

impl McEstimate {
    /// Normal-theory interval around the sample mean.
    pub fn from_moments(m: &Moments, n_rep: u64, seed: u64) -> Self {
        let value = m.mean();
        let stderr = m.stderr();
        McEstimate {
            value,
            stderr,
            ci95: [value - Z95 * stderr, value + Z95 * stderr],
            n_rep,
            seed,
        }
    }

    /// Like [`from_moments`](Self::from_moments) for a probability: the interval
    /// is clipped to `[0, 1]`, and when every sample agreed (no hits or all
    /// hits) the exact Clopper-Pearson bound replaces the degenerate interval.
    pub fn probability(m: &Moments, n_rep: u64, seed: u64) -> Self {
        let mut est = Self::from_moments(m, n_rep, seed);
        let n = n_rep.max(1) as f64;
        if est.stderr == 0.0 {
            // 1 - 0.025^(1/n): the 95% two-sided exact bound for 0 successes
            let edge = -(0.025f64.ln() / n).exp_m1();
            if est.value <= 0.0 {
                est.ci95 = [0.0, edge];
            } else if est.value >= 1.0 {
                est.ci95 = [1.0 - edge, 1.0];
            }
        }
        est.ci95 = [est.ci95[0].clamp(0.0, 1.0), est.ci95[1].clamp(0.0, 1.0)];
        est
    }

    /// A deterministic quantity dressed as an estimate (zero error).
    pub fn exact(value: f64, n_rep: u64, seed: u64) -> Self {
        McEstimate {
            value,
            stderr: 0.0,
            ci95: [value, value],
            n_rep,
            seed,
        }
    }

    /// Multiplies value, error and interval by a non-negative constant.
    pub fn scaled(&self, factor: f64) -> Self {
        McEstimate {
            value: self.value * factor,
            stderr: self.stderr * factor.abs(),
            ci95: [self.ci95[0] * factor, self.ci95[1] * factor],
            ..*self
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci95[0] <= x && x <= self.ci95[1]
    }

    /// Standard error of the difference of two independent estimates.
    pub fn joint_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}
