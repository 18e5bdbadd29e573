//! Large-threshold approximations.

pub mod equicorr;
pub mod pickands;
pub mod rate;
pub mod tail;

use log::info;
use serde::Serialize;

use crate::error::Result;
use crate::index::{k_subsets, IndexSet};
use crate::qp::QpSolution;
use crate::spec::RiskSpec;

pub use equicorr::{equicorrelated_closed_forms, EquicorrResult};
pub use pickands::{constant_c, estimate_e, EEstimate, PickandsConfig, PickandsEstimate};
pub use rate::{rate_function, RateFunction};
pub use tail::{tail_asymptotic_p1, P1Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FiniteHorizon,
    /// Only `log_value` is meaningful: no prefactor is available.
    InfiniteHorizonLograte,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetTerm {
    pub subset: IndexSet,
    pub value: f64,
    pub log_value: f64,
    pub stderr: f64,
    /// Program on the sub-model; vectors run over `subset` in increasing
    /// order, index sets use the global component numbers.
    pub qp: QpSolution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1: Option<P1Term>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<PickandsEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateFunction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticEstimate {
    pub regime: Regime,
    pub u: f64,
    pub value: f64,
    pub log_value: f64,
    pub stderr: f64,
    pub terms: Vec<SubsetTerm>,
    pub dominant_subsets: Vec<IndexSet>,
    /// Subsets left out because their thresholds have no positive component.
    pub excluded_subsets: Vec<IndexSet>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticConfig {
    pub pickands: PickandsConfig,
    /// Replications for conditional factors with `|U| >= 2`.
    pub cond_n_rep: u64,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        AsymptoticConfig {
            pickands: PickandsConfig::default(),
            cond_n_rep: 100_000,
        }
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
}

/// Relabels the index sets of a program solved on `subset` with global
/// component numbers.
fn lift(mut qp: QpSolution, subset: &IndexSet) -> QpSolution {
    let map = |s: &IndexSet| IndexSet::new(s.iter().map(|i| subset.as_slice()[i]).collect());
    qp.index_i = map(&qp.index_i);
    qp.index_j = map(&qp.index_j);
    qp.index_u = map(&qp.index_u);
    qp
}

/// Sum over all `k`-subsets `I` of `C(a_I) p_1(a_I u)`, after reducing the
/// horizon to 1. The start time `S` does not enter.
pub fn psi_k_asymptotic(spec: &RiskSpec, cfg: &AsymptoticConfig) -> Result<AsymptoticEstimate> {
    spec.check_finite_asymptotic()?;
    let unit = spec.unit_horizon()?;
    let mut terms = Vec::new();
    let mut excluded = Vec::new();
    // keys of already estimated constants: (active sigma, a_I, lambda_I) bit patterns
    let mut cache: Vec<(Vec<u64>, PickandsEstimate)> = Vec::new();
    // dominance keys: (value, lambda^T c, m)
    let mut keys = Vec::new();
    for (tag, subset) in k_subsets(spec.dim(), spec.k).into_iter().enumerate() {
        let r = unit.restrict(&subset);
        if r.a.iter().all(|&x| x <= 0.0) {
            info!("subset {subset} has no positive threshold and is left out");
            excluded.push(subset);
            continue;
        }
        let p1 = tail::p1_unit(&r, cfg.cond_n_rep, cfg.pickands.seed)?;
        let active = &p1.qp.index_i;
        let sub = r.model.restrict(active);
        let a_i = active.select(&r.a);
        let lambda_i = active.select(&p1.qp.lambda);
        let key: Vec<u64> = sub
            .sigma()
            .iter()
            .chain(&a_i)
            .chain(&lambda_i)
            .map(|x| x.to_bits())
            .collect();
        let constant = match cache.iter().find(|(k, _)| *k == key) {
            Some((_, c)) => c.clone(),
            None => {
                let c = pickands::constant_for_active_set(
                    &sub,
                    &a_i,
                    &lambda_i,
                    active.clone(),
                    &cfg.pickands,
                    tag as u64,
                )?;
                cache.push((key, c.clone()));
                c
            }
        };
        let c_val = constant.c_of_a;
        let value = c_val.value * p1.value;
        let rel = |se: f64, v: f64| if v > 0.0 { se / v } else { 0.0 };
        let stderr = value * rel(c_val.stderr, c_val.value).hypot(rel(p1.stderr, p1.value));
        let lambda_c: f64 = p1.qp.lambda.iter().zip(&r.c).map(|(l, c)| l * c).sum();
        keys.push((p1.qp.value, lambda_c, p1.qp.m));
        let mut constant = constant;
        constant.index_i = IndexSet::new(constant.index_i.iter().map(|i| subset.as_slice()[i]).collect());
        terms.push(SubsetTerm {
            qp: lift(p1.qp.clone(), &subset),
            subset,
            value,
            log_value: c_val.value.ln() + p1.log_value,
            stderr,
            p1: Some(p1),
            constant: Some(constant),
            rate: None,
        });
    }
    let dominant = dominant_by_keys(&terms, &keys);
    Ok(AsymptoticEstimate {
        regime: Regime::FiniteHorizon,
        u: spec.u,
        value: terms.iter().map(|t| t.value).sum(),
        log_value: log_sum_exp(terms.iter().map(|t| t.log_value)),
        stderr: terms.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt(),
        terms,
        dominant_subsets: dominant,
        excluded_subsets: excluded,
    })
}

/// Subsets that lead asymptotically: smallest program value, then smallest
/// `lambda^T c`, then smallest active set.
fn dominant_by_keys(terms: &[SubsetTerm], keys: &[(f64, f64, usize)]) -> Vec<IndexSet> {
    let Some(best) = keys.iter().copied().reduce(|b, k| {
        let better = if !near(k.0, b.0) {
            k.0 < b.0
        } else if !near(k.1, b.1) {
            k.1 < b.1
        } else {
            k.2 < b.2
        };
        if better {
            k
        } else {
            b
        }
    }) else {
        return Vec::new();
    };
    terms
        .iter()
        .zip(keys)
        .filter(|(_, k)| near(k.0, best.0) && near(k.1, best.1) && k.2 == best.2)
        .map(|(t, _)| t.subset.clone())
        .collect()
}

/// Exponential decay rate of the infinite-horizon probability:
/// `-log psi_k(0, inf, a u) ~ (u / 2) min_I min_t r_I(t)`.
pub fn infinite_horizon_lograte(spec: &RiskSpec) -> Result<AsymptoticEstimate> {
    spec.check_infinite_conditions()?;
    let mut terms = Vec::new();
    for subset in k_subsets(spec.dim(), spec.k) {
        let rate = rate_function(spec, &subset)?;
        let r = spec.restrict(&subset);
        let b: Vec<f64> = r.a.iter().zip(&r.c).map(|(a, c)| a + c * rate.t_hat).collect();
        let qp = lift(crate::qp::solve_pi_sigma(&r.model, &b)?, &subset);
        let log_value = -0.5 * spec.u * rate.r_min;
        terms.push(SubsetTerm {
            subset,
            value: log_value.exp(),
            log_value,
            stderr: 0.0,
            qp,
            p1: None,
            constant: None,
            rate: Some(rate),
        });
    }
    let best = terms.iter().map(|t| t.log_value).fold(f64::NEG_INFINITY, f64::max);
    let dominant = terms
        .iter()
        .filter(|t| near(t.log_value, best))
        .map(|t| t.subset.clone())
        .collect();
    Ok(AsymptoticEstimate {
        regime: Regime::InfiniteHorizonLograte,
        u: spec.u,
        value: best.exp(),
        log_value: best,
        stderr: 0.0,
        terms,
        dominant_subsets: dominant,
        excluded_subsets: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::CovModel;
    use crate::spec::Horizon;
    use crate::stats::normal_sf;

    fn infinite(model: CovModel, a: Vec<f64>, c: Vec<f64>, u: f64, k: usize) -> RiskSpec {
        RiskSpec::new(model, a, c, u, k, 0.0, Horizon::Infinite).unwrap()
    }

    #[test]
    fn lograte_one_dimension_is_exact() {
        for (a, c) in [(1.0, 1.0), (2.0, 3.0), (0.5, 2.0)] {
            let e = infinite_horizon_lograte(&infinite(CovModel::identity(1), vec![a], vec![c], 4.0, 1)).unwrap();
            let exact = 2.0 * a * c * 4.0;
            assert!((-e.log_value - exact).abs() <= 1e-12 * exact, "{} vs {exact}", -e.log_value);
        }
    }

    #[test]
    fn lograte_independent_takes_the_minimum() {
        let e = infinite_horizon_lograte(&infinite(CovModel::identity(2), vec![1.0, 2.0], vec![1.0, 0.2], 3.0, 1)).unwrap();
        let expect = (2.0f64 * 1.0 * 1.0).min(2.0 * 2.0 * 0.2) * 3.0;
        assert!((-e.log_value - expect).abs() <= 1e-12 * expect);
        assert_eq!(e.dominant_subsets, vec![IndexSet::new(vec![1])]);
    }

    #[test]
    fn lograte_rejects_sign_violations() {
        let s = infinite(CovModel::identity(1), vec![1.0], vec![-1.0], 3.0, 1);
        assert!(matches!(infinite_horizon_lograte(&s), Err(crate::BrmError::SignCondition(_))));
    }

    #[test]
    fn k_equal_one_is_twice_the_tail_sum() {
        let cfg = AsymptoticConfig {
            pickands: PickandsConfig {
                lambda0: 8.0,
                steps_per_unit: 4,
                max_doublings: 6,
                n_rep: 200_000,
                seed: 1,
            },
            cond_n_rep: 10_000,
        };
        let m = CovModel::equicorrelated(3, 0.4).unwrap();
        let s = RiskSpec::finite(m, vec![1.0, 1.5, 2.0], vec![0.5, 0.0, -0.5], 6.0, 1, 1.0).unwrap();
        let e = psi_k_asymptotic(&s, &cfg).unwrap();
        assert_eq!(e.terms.len(), 3);
        // the three single-component constants are estimated with independent streams
        for t in &e.terms {
            let c = t.constant.as_ref().unwrap().c_of_a;
            assert!((c.value - 2.0).abs() <= 3.0 * c.stderr, "{c:?}");
        }
        let closed: f64 = [(1.0, 0.5), (1.5, 0.0), (2.0, -0.5)]
            .iter()
            .map(|(a, c)| 2.0 * crate::stats::normal_pdf(a * 6.0 + c) / (a * 6.0))
            .sum();
        assert!((e.value / closed - 1.0).abs() <= 3.0 * e.stderr / closed);
        assert_eq!(e.dominant_subsets, vec![IndexSet::new(vec![0])]);
        // against the exact tails: Mills ratio at 6.5 and the factor 6.5 / 6 from u^{-1}
        let tails: f64 = [(1.0, 0.5), (1.5, 0.0), (2.0, -0.5)].iter().map(|(a, c)| 2.0 * normal_sf(a * 6.0 + c)).sum();
        assert!((e.value / tails - 1.107).abs() < 0.02, "{} {}", e.value, tails);
    }
}
