//! Large-threshold form of the single-time probability
//! `p_1(a u) = P(W(1) - c > a u)`:
//!
//! ```text
//!   p_1(a u) ~ prod_{i in I} lambda_i^{-1} P(W_U(1) > c_U | W_I(1) = c_I) u^{-m} phi_I(u a_I + c_I)
//! ```
//!
//! with `phi_I` the density of `W_I(1)`.

use serde::Serialize;

use crate::error::{BrmError, Result};
use crate::gauss::{mvn_survival, Lower, MIN_SURVIVAL_REPS};
use crate::qp::{solve_pi_sigma, QpSolution};
use crate::spec::RiskSpec;
use crate::stats::{normal_sf, McEstimate};

#[derive(Debug, Clone, Serialize)]
pub struct P1Term {
    pub qp: QpSolution,
    pub value: f64,
    pub log_value: f64,
    pub stderr: f64,
    /// `P(W_U(1) > c_U | W_I(1) = c_I)`; exactly 1 when `U` is empty.
    pub cond_factor: McEstimate,
}

/// Evaluates the formula for a spec whose horizon is already `T = 1`.
pub(crate) fn p1_unit(spec: &RiskSpec, n_rep: u64, seed: u64) -> Result<P1Term> {
    let qp = solve_pi_sigma(&spec.model, &spec.a)?;
    let u = spec.u;
    let idx = &qp.index_i;
    let point: Vec<f64> = idx.iter().map(|i| u * spec.a[i] + spec.c[i]).collect();
    let log_phi = spec.model.restrict(idx).log_pdf(&point);
    let log_lambda: f64 = idx.iter().map(|i| qp.lambda[i].ln()).sum();

    let cond_factor = if qp.index_u.is_empty() {
        McEstimate::exact(1.0, 0, seed)
    } else {
        let c_i = idx.select(&spec.c);
        let (mean, cond) = spec.model.conditional(idx, &c_i, &qp.index_u);
        let lower: Vec<f64> = qp
            .index_u
            .iter()
            .zip(&mean)
            .map(|(j, mu)| spec.c[j] - mu)
            .collect();
        if lower.len() == 1 {
            McEstimate::exact(normal_sf(lower[0] / cond.sd(0)), 0, seed)
        } else {
            if n_rep < MIN_SURVIVAL_REPS {
                return Err(BrmError::Precondition(format!(
                    "the conditional factor needs n_rep >= {MIN_SURVIVAL_REPS}"
                )));
            }
            let lower: Vec<Lower> = lower.into_iter().map(Lower::At).collect();
            mvn_survival(&cond, &lower, n_rep, seed)?
        }
    };
    let log_value = -log_lambda - qp.m as f64 * u.ln() + log_phi + cond_factor.value.ln();
    let value = log_value.exp();
    let stderr = if cond_factor.value > 0.0 {
        value * cond_factor.stderr / cond_factor.value
    } else {
        cond_factor.stderr * (-log_lambda - qp.m as f64 * u.ln() + log_phi).exp()
    };
    Ok(P1Term {
        qp,
        value,
        log_value,
        stderr,
        cond_factor,
    })
}

/// The formula for `p_T(a u)`, reduced to `T = 1` by self-similarity.
pub fn tail_asymptotic_p1(spec: &RiskSpec, n_rep: u64, seed: u64) -> Result<P1Term> {
    p1_unit(&spec.unit_horizon()?, n_rep, seed)
}
