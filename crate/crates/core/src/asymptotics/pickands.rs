//! Monte Carlo evaluation of
//! `E([0, L]) = int P(exists t in [0, L]: W_I(t) - t a_I > x) exp(lambda^T x) dx`
//! and of the constant `C(a) = prod(lambda_I) E([0, inf))`.
//!
//! Estimator: simulate `Y(t) = W_I(t) - t a_I`, let `M` be its componentwise
//! maximum, draw `x_i = M_i - E_i / lambda_i` with `E_i ~ Exp(1)`, and average
//! `prod(exp(lambda_i M_i) / lambda_i) * 1{exists t: Y(t) > x}`. The weight is
//! the `exp(lambda^T x) dx` measure of the box below `M`, so the mean is `E`.
//!
//! For one component the path supremum between grid points is drawn exactly
//! from the Brownian bridge law, so the estimate has no time discretisation
//! error. For several components the event is checked on the grid only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{BrmError, Result};
use crate::gauss::CovModel;
use crate::index::IndexSet;
use crate::qp::solve_pi_sigma;
use crate::rng::{domain, run_blocks};
use crate::stats::{McEstimate, Moments};

/// Fewest replications per level for which the stopping rule is meaningful.
pub const MIN_SCHEDULE_REPS: u64 = 1000;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PickandsConfig {
    /// First truncation level.
    pub lambda0: f64,
    /// Grid steps per unit of time; the step is the same at every level so
    /// the grids are nested.
    pub steps_per_unit: usize,
    /// The truncation level is doubled at most this many times.
    pub max_doublings: u32,
    pub n_rep: u64,
    pub seed: u64,
}

impl Default for PickandsConfig {
    fn default() -> Self {
        PickandsConfig {
            lambda0: 8.0,
            steps_per_unit: 256,
            max_doublings: 6,
            n_rep: 100_000,
            seed: 0,
        }
    }
}

/// One evaluation of `E([0, L])` together with the same estimator on every
/// second grid point of the same paths.
#[derive(Debug, Clone, Serialize)]
pub struct EEstimate {
    pub lambda_cap: f64,
    pub grid_steps: usize,
    pub value: McEstimate,
    pub coarse: McEstimate,
    /// Standard error of `value - coarse` (paired).
    pub refinement_stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PickandsEstimate {
    pub index_i: IndexSet,
    pub lambda_cap: f64,
    /// `E([0, lambda_cap])`.
    pub value: McEstimate,
    /// `prod lambda_i`.
    pub prefactor: f64,
    /// `prefactor * value`.
    pub c_of_a: McEstimate,
    /// `(L, E, stderr)` for every level visited.
    pub schedule: Vec<(f64, f64, f64)>,
    pub refinement: EEstimate,
}

/// `E([0, lambda_cap])` on a grid of `grid_steps` equal steps (even, >= 2).
pub fn estimate_e(
    model: &CovModel,
    a: &[f64],
    lambda: &[f64],
    lambda_cap: f64,
    grid_steps: usize,
    n_rep: u64,
    seed: u64,
) -> Result<EEstimate> {
    estimate_e_tagged(model, a, lambda, lambda_cap, grid_steps, n_rep, seed, &[domain::PICKANDS])
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn estimate_e_tagged(
    model: &CovModel,
    a: &[f64],
    lambda: &[f64],
    lambda_cap: f64,
    grid_steps: usize,
    n_rep: u64,
    seed: u64,
    tags: &[u64],
) -> Result<EEstimate> {
    let m = model.dim();
    if a.len() != m || lambda.len() != m {
        return Err(BrmError::DimensionMismatch(format!(
            "a and lambda must have length {m}"
        )));
    }
    if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(BrmError::Precondition(format!(
            "lambda must be positive componentwise, got {lambda:?}"
        )));
    }
    if !(lambda_cap >= 0.0 && lambda_cap.is_finite()) {
        return Err(BrmError::InvalidInput(format!("truncation level {lambda_cap} must be >= 0")));
    }
    let inv_prod: f64 = lambda.iter().map(|l| 1.0 / l).product();
    if lambda_cap == 0.0 {
        // M = 0, the indicator is 1{x < 0}: the weight integrates to prod 1/lambda
        let e = McEstimate::exact(inv_prod, n_rep, seed);
        return Ok(EEstimate {
            lambda_cap,
            grid_steps,
            value: e,
            coarse: e,
            refinement_stderr: 0.0,
        });
    }
    if grid_steps < 2 || grid_steps % 2 != 0 {
        return Err(BrmError::InvalidInput(format!(
            "grid_steps must be even and >= 2, got {grid_steps}"
        )));
    }
    if n_rep < 2 {
        return Err(BrmError::InvalidInput("n_rep must be at least 2".into()));
    }
    let h = lambda_cap / grid_steps as f64;
    let blocks = run_blocks(n_rep, seed, tags, |rng, len| {
        let mut fine = Moments::default();
        let mut coarse = Moments::default();
        let mut diff = Moments::default();
        let mut path = PathBuffer::new(m, grid_steps);
        for _ in 0..len {
            let (f, c) = if m == 1 {
                one_path_exact(rng, a[0], lambda[0], h, grid_steps)
            } else {
                path.one_path(rng, model, a, lambda, h)
            };
            fine.push(f);
            coarse.push(c);
            diff.push(f - c);
        }
        (fine, coarse, diff)
    });
    let fine = Moments::combine(blocks.iter().map(|b| &b.0));
    let coarse = Moments::combine(blocks.iter().map(|b| &b.1));
    let diff = Moments::combine(blocks.iter().map(|b| &b.2));
    Ok(EEstimate {
        lambda_cap,
        grid_steps,
        value: McEstimate::from_moments(&fine, n_rep, seed),
        coarse: McEstimate::from_moments(&coarse, n_rep, seed),
        refinement_stderr: diff.stderr(),
    })
}

/// One replication for a single component. Returns the same value twice: the
/// supremum is exact, so the coarse grid sees the same path maximum.
fn one_path_exact(rng: &mut ChaCha8Rng, a: f64, lambda: f64, h: f64, n: usize) -> (f64, f64) {
    let sh = h.sqrt();
    let mut y = 0.0f64;
    let mut best = 0.0f64;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let next = y + sh * z - a * h;
        let top = best.max(next);
        let u: f64 = rng.random();
        // P(bridge max > m) = exp(-2 (m - y)(m - next) / h) for m >= max(y, next)
        if u < (-2.0 * (top - y) * (top - next) / h).exp() {
            let dy = next - y;
            let peak = 0.5 * (y + next + (dy * dy - 2.0 * h * u.ln()).sqrt());
            best = top.max(peak);
        } else {
            best = top;
        }
        y = next;
    }
    // the indicator is 1: x < M and the path reaches M
    let v = (lambda * best).exp() / lambda;
    (v, v)
}

struct PathBuffer {
    m: usize,
    values: Vec<f64>,
    z: Vec<f64>,
    inc: Vec<f64>,
}

impl PathBuffer {
    fn new(m: usize, n: usize) -> Self {
        PathBuffer {
            m,
            values: vec![0.0; m * (n + 1)],
            z: vec![0.0; m],
            inc: vec![0.0; m],
        }
    }

    fn one_path(&mut self, rng: &mut ChaCha8Rng, model: &CovModel, a: &[f64], lambda: &[f64], h: f64) -> (f64, f64) {
        let m = self.m;
        let n = self.values.len() / m - 1;
        let e: Vec<f64> = (0..m).map(|_| rng.sample(Exp1)).collect();
        let sh = h.sqrt();
        let mut max_f = vec![0.0f64; m];
        let mut max_c = vec![0.0f64; m];
        self.values[..m].iter_mut().for_each(|v| *v = 0.0);
        for j in 1..=n {
            crate::gauss::fill_normal(rng, &mut self.z);
            model.correlate(&self.z, &mut self.inc);
            let (prev, cur) = self.values.split_at_mut(j * m);
            let prev = &prev[(j - 1) * m..];
            for i in 0..m {
                let v = prev[i] + sh * self.inc[i] - a[i] * h;
                cur[i] = v;
                max_f[i] = max_f[i].max(v);
                if j % 2 == 0 {
                    max_c[i] = max_c[i].max(v);
                }
            }
        }
        let score = |maxes: &[f64], stride: usize| -> f64 {
            let x: Vec<f64> = (0..m).map(|i| maxes[i] - e[i] / lambda[i]).collect();
            let hit = (0..=n)
                .step_by(stride)
                .any(|j| self.values[j * m..(j + 1) * m].iter().zip(&x).all(|(y, x)| y > x));
            if hit {
                (0..m).map(|i| (lambda[i] * maxes[i]).exp() / lambda[i]).product()
            } else {
                0.0
            }
        };
        (score(&max_f, 1), score(&max_c, 2))
    }
}

/// The constant `C(a)` for the quadratic program on `(model, a)`: solves the
/// program, then doubles the truncation level from `lambda0` until two
/// successive estimates of `E` agree within two joint standard errors.
pub fn constant_c(model: &CovModel, a: &[f64], cfg: &PickandsConfig) -> Result<PickandsEstimate> {
    constant_c_tagged(model, a, cfg, 0)
}

pub(crate) fn constant_c_tagged(model: &CovModel, a: &[f64], cfg: &PickandsConfig, subset_tag: u64) -> Result<PickandsEstimate> {
    let sol = solve_pi_sigma(model, a)?;
    let sub = model.restrict(&sol.index_i);
    let a_i = sol.index_i.select(a);
    let lambda_i = sol.index_i.select(&sol.lambda);
    constant_for_active_set(&sub, &a_i, &lambda_i, sol.index_i, cfg, subset_tag)
}

pub(crate) fn constant_for_active_set(
    sub: &CovModel,
    a_i: &[f64],
    lambda_i: &[f64],
    index_i: IndexSet,
    cfg: &PickandsConfig,
    subset_tag: u64,
) -> Result<PickandsEstimate> {
    if !(cfg.lambda0 > 0.0) || cfg.steps_per_unit == 0 {
        return Err(BrmError::InvalidInput(
            "lambda0 and steps_per_unit must be positive".into(),
        ));
    }
    if cfg.n_rep < MIN_SCHEDULE_REPS {
        return Err(BrmError::Precondition(format!(
            "the truncation schedule needs n_rep >= {MIN_SCHEDULE_REPS}, got {}",
            cfg.n_rep
        )));
    }
    let prefactor: f64 = lambda_i.iter().product();
    let mut schedule = Vec::new();
    let mut prev: Option<EEstimate> = None;
    for j in 0..=cfg.max_doublings {
        let cap = cfg.lambda0 * f64::from(1u32 << j);
        let steps = ((cap * cfg.steps_per_unit as f64).round() as usize).max(2);
        let steps = steps + steps % 2;
        let est = estimate_e_tagged(
            sub,
            a_i,
            lambda_i,
            cap,
            steps,
            cfg.n_rep,
            cfg.seed,
            &[domain::PICKANDS, subset_tag, u64::from(j)],
        )?;
        schedule.push((cap, est.value.value, est.value.stderr));
        if let Some(p) = &prev {
            let gap = (est.value.value - p.value.value).abs();
            if gap < 2.0 * est.value.joint_stderr(&p.value) {
                return Ok(PickandsEstimate {
                    index_i,
                    lambda_cap: cap,
                    value: est.value,
                    prefactor,
                    c_of_a: est.value.scaled(prefactor),
                    schedule,
                    refinement: est,
                });
            }
        }
        prev = Some(est);
    }
    Err(BrmError::TruncationNotConverged {
        last_lambda: schedule.last().map_or(0.0, |s| s.0),
        estimates: schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_truncation_is_exact() {
        let m = CovModel::identity(2);
        let e = estimate_e(&m, &[1.0, 1.0], &[0.5, 2.0], 0.0, 2, 10, 0).unwrap();
        assert_eq!(e.value.value, 1.0);
        assert_eq!(e.value.stderr, 0.0);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let m = CovModel::identity(2);
        assert!(matches!(
            estimate_e(&m, &[1.0, 1.0], &[1.0, 0.0], 1.0, 8, 10, 0),
            Err(BrmError::Precondition(_))
        ));
        assert!(estimate_e(&m, &[1.0, 1.0], &[1.0, 1.0], 1.0, 7, 10, 0).is_err());
    }

    #[test]
    fn one_dimensional_value_is_two() {
        // lambda E = 2 for a = lambda = 1 in the limit; L = 30 is far into it
        let m = CovModel::identity(1);
        let e = estimate_e(&m, &[1.0], &[1.0], 30.0, 240, 200_000, 3).unwrap();
        assert!((e.value.value - 2.0).abs() <= 3.0 * e.value.stderr, "{:?}", e.value);
        assert_eq!(e.value.value, e.coarse.value);
    }

    #[test]
    fn seed_reproducible() {
        let m = CovModel::equicorrelated(2, 0.3).unwrap();
        let x = estimate_e(&m, &[1.0, 1.0], &[0.7, 0.7], 2.0, 64, 2000, 5).unwrap();
        let y = estimate_e(&m, &[1.0, 1.0], &[0.7, 0.7], 2.0, 64, 2000, 5).unwrap();
        assert_eq!(x.value, y.value);
        assert!(x.coarse.value <= x.value.value + 4.0 * x.refinement_stderr);
    }
}
