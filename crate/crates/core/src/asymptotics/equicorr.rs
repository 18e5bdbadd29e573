//! Closed forms for the worked examples: independent-like `k = 1`, pairs with
//! unit thresholds, and the equi-correlated model.

use serde::Serialize;

use super::pickands::{constant_for_active_set, PickandsConfig, PickandsEstimate};
use super::{AsymptoticEstimate, Regime, SubsetTerm};
use crate::error::{BrmError, Result};
use crate::gauss::CovModel;
use crate::index::{binomial, k_subsets, IndexSet};
use crate::qp::{QpSolution, TAU_ACT};
use crate::stats::{normal_sf, McEstimate};

/// `(Sigma_II)^{-1} a_I` for unit variances and common correlation `rho`.
pub fn krue_lambda(rho: f64, a_i: &[f64]) -> Vec<f64> {
    let m = a_i.len() as f64;
    let s: f64 = a_i.iter().sum();
    let shift = rho * s / (1.0 + rho * (m - 1.0));
    a_i.iter().map(|a| (a - shift) / (1.0 - rho)).collect()
}

/// Whether the whole index set is active for the equi-correlated model:
/// `min a > rho sum(a) / (1 + rho (d - 1))`.
pub fn full_index_criterion(rho: f64, a: &[f64]) -> bool {
    let d = a.len() as f64;
    let s: f64 = a.iter().sum();
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    min > rho * s / (1.0 + rho * (d - 1.0))
}

/// The value of the smallest threshold at which the criterion flips, given
/// the other `d - 1` thresholds (valid while it stays below them).
pub fn full_index_threshold(rho: f64, others: &[f64]) -> f64 {
    let n = others.len() as f64;
    rho * others.iter().sum::<f64>() / (1.0 + rho * (n - 1.0))
}

/// `2 sum_i P(B(1) > a_i u + c_i)`, the `k = 1` limit for positive `a`.
pub fn example1_asymptotic(a: &[f64], c: &[f64], u: f64) -> Result<f64> {
    if a.len() != c.len() {
        return Err(BrmError::DimensionMismatch("a and c differ in length".into()));
    }
    if a.iter().any(|&x| x <= 0.0) {
        return Err(BrmError::Precondition("all thresholds must be positive".into()));
    }
    Ok(2.0 * a.iter().zip(c).map(|(a, c)| normal_sf(a * u + c)).sum::<f64>())
}

/// Pairs `(i, j)` with the largest correlation and, among those, the smallest
/// `c_i + c_j`. A larger drift sum makes the pair's tail lighter.
pub fn dominant_pairs(model: &CovModel, c: &[f64]) -> Vec<(usize, usize)> {
    let d = model.dim();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect();
    let tol = 1e-12;
    let top = pairs.iter().map(|&(i, j)| model.corr(i, j)).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|&(i, j)| model.corr(i, j) >= top - tol)
        .collect();
    let low = best.iter().map(|&(i, j)| c[i] + c[j]).fold(f64::INFINITY, f64::min);
    best.into_iter().filter(|&(i, j)| c[i] + c[j] <= low + tol).collect()
}

/// Tail formula for `P(W_i(1) - c_i > u, W_j(1) - c_j > u)` with unit
/// variances and correlation `rho`.
pub fn example2_pair_tail(rho: f64, ci: f64, cj: f64, u: f64) -> f64 {
    let s = 1.0 - rho * rho;
    let pre = (1.0 + rho).powi(2) / (2.0 * std::f64::consts::PI * s.sqrt());
    let expo = -u * u / (1.0 + rho) - (ci + cj) * u / (1.0 + rho) - (ci * ci - 2.0 * rho * ci * cj + cj * cj) / (2.0 * s);
    pre * u.powi(-2) * expo.exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquicorrResult {
    pub d: usize,
    pub k: usize,
    pub rho: f64,
    /// `lambda_I` for `I = {1..k}`.
    pub lambda: Vec<f64>,
    pub m: usize,
    pub full_index: bool,
    /// Number of `k`-subsets, `d! / (k! (d - k)!)`.
    pub binomial: f64,
    /// `prod lambda_i`.
    pub prefactor: f64,
    /// `log` of the tail formula for `P(W_i(1) > u a + c, i <= k)`.
    pub log_p1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pickands: Option<PickandsEstimate>,
    /// `binomial * prod lambda * E`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<McEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<AsymptoticEstimate>,
}

/// Equi-correlated model with `a = alpha 1`, `c = gamma 1`. Every `k`-subset
/// gives the same term, with the full subset active and `lambda` from the
/// closed form. With `cfg`, the integral is estimated once and the
/// asymptotic is assembled.
pub fn equicorrelated_closed_forms(
    d: usize,
    rho: f64,
    alpha: f64,
    gamma: f64,
    k: usize,
    u: f64,
    cfg: Option<&PickandsConfig>,
) -> Result<EquicorrResult> {
    if d == 0 || k == 0 || k > d {
        return Err(BrmError::InvalidInput(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    if d > 1 && !(rho > -1.0 / (d as f64 - 1.0) && rho < 1.0) {
        return Err(BrmError::InvalidCovariance(format!(
            "rho = {rho} is outside (-1/(d-1), 1)"
        )));
    }
    if !(alpha > 0.0) {
        return Err(BrmError::Precondition(format!("alpha must be positive, got {alpha}")));
    }
    if !(u > 0.0) {
        return Err(BrmError::InvalidInput(format!("u must be positive, got {u}")));
    }
    // validates positive definiteness of the full model
    CovModel::equicorrelated(d, rho)?;
    let sub = CovModel::equicorrelated(k, rho)?;
    let a_i = vec![alpha; k];
    let lambda = krue_lambda(rho, &a_i);
    let prefactor: f64 = lambda.iter().product();
    let point = vec![u * alpha + gamma; k];
    let log_p1 = -lambda.iter().map(|l| l.ln()).sum::<f64>() - k as f64 * u.ln() + sub.log_pdf(&point);
    let binom = binomial(d, k);
    let mut out = EquicorrResult {
        d,
        k,
        rho,
        m: k,
        full_index: full_index_criterion(rho, &vec![alpha; d]),
        lambda: lambda.clone(),
        binomial: binom,
        prefactor,
        log_p1,
        pickands: None,
        constant: None,
        estimate: None,
    };
    let Some(cfg) = cfg else {
        return Ok(out);
    };
    let pk = constant_for_active_set(&sub, &a_i, &lambda, IndexSet::full(k), cfg, 0)?;
    let per_subset = pk.c_of_a;
    let c_sub = per_subset.value;
    let term_value = c_sub * log_p1.exp();
    let term_stderr = per_subset.stderr * log_p1.exp();
    let subsets = k_subsets(d, k);
    let terms: Vec<SubsetTerm> = subsets
        .iter()
        .map(|s| {
            let qp = QpSolution {
                a_tilde: vec![alpha; k],
                index_i: s.clone(),
                index_j: IndexSet::default(),
                index_u: IndexSet::default(),
                lambda: lambda.clone(),
                value: alpha * lambda.iter().sum::<f64>(),
                m: k,
                boundary_degenerate: lambda.iter().any(|&l| l <= TAU_ACT),
            };
            SubsetTerm {
                subset: s.clone(),
                value: term_value,
                log_value: c_sub.ln() + log_p1,
                stderr: term_stderr,
                qp,
                p1: None,
                constant: None,
                rate: None,
            }
        })
        .collect();
    out.constant = Some(per_subset.scaled(binom));
    out.estimate = Some(AsymptoticEstimate {
        regime: Regime::FiniteHorizon,
        u,
        value: binom * term_value,
        log_value: binom.ln() + c_sub.ln() + log_p1,
        stderr: binom * term_stderr,
        dominant_subsets: subsets,
        terms,
        excluded_subsets: Vec::new(),
    });
    out.pickands = Some(pk);
    Ok(out)
}
