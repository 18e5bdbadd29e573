//! Non-asymptotic brackets for the simultaneous failure probability.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BrmError, Result};
use crate::gauss::{antithetic_mc, mvn_survival, Lower};
use crate::index::{binomial, k_subsets, IndexSet};
use crate::rng::domain;
use crate::spec::RiskSpec;
use crate::stats::{McEstimate, Z95};

/// Largest dimension accepted by [`k_constant`].
pub const MAX_K_DIM: usize = 20;
const K_SUBSET_WARN: f64 = 1e5;

/// Monte Carlo estimate of `p_T(u) = P(at least k components of W(T) - c T
/// exceed a u)`.
pub fn p_t(spec: &RiskSpec, n_rep: u64, seed: u64) -> Result<McEstimate> {
    let t = spec.finite_t()?;
    check_reps(n_rep)?;
    let st = t.sqrt();
    let level: Vec<f64> = spec
        .a
        .iter()
        .zip(&spec.c)
        .map(|(a, c)| (a * spec.u + c * t) / st)
        .collect();
    let k = spec.k;
    let m = antithetic_mc(&spec.model, n_rep, seed, &[domain::P_T], |x| {
        let count = x.iter().zip(&level).filter(|(x, l)| x > l).count();
        (count >= k) as u8 as f64
    });
    Ok(McEstimate::probability(&m, 2 * m.n, seed))
}

/// The sandwich constant and the orthant probabilities it is built from.
#[derive(Debug, Clone, Serialize)]
pub struct KConstant {
    pub value: f64,
    /// Delta-method standard error of `value`.
    pub stderr: f64,
    /// The subset with the smallest orthant probability.
    pub argmin: IndexSet,
    pub per_subset: Vec<SubsetProbability>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsetProbability {
    pub subset: IndexSet,
    pub probability: McEstimate,
}

/// `K = 1 / min_{|I| = k} P(W_i(T) > max(0, c_i T) for all i in I)`.
///
/// Every subset is estimated from the same random stream, so the result does
/// not depend on `a` or `u`.
pub fn k_constant(spec: &RiskSpec, n_rep: u64, seed: u64) -> Result<KConstant> {
    let t = spec.finite_t()?;
    let d = spec.dim();
    if d > MAX_K_DIM {
        return Err(BrmError::Unsupported(format!(
            "K enumerates all k-subsets and is limited to d <= {MAX_K_DIM}, got {d}"
        )));
    }
    let n_sub = binomial(d, spec.k);
    if n_sub > K_SUBSET_WARN {
        warn!("K needs {n_sub} orthant probabilities");
    }
    let st = t.sqrt();
    let subsets = k_subsets(d, spec.k);
    let per_subset = subsets
        .into_par_iter()
        .map(|subset| {
            let lower: Vec<Lower> = (0..d)
                .map(|i| {
                    if subset.contains(i) {
                        Lower::At((spec.c[i] * st).max(0.0))
                    } else {
                        Lower::Unbounded
                    }
                })
                .collect();
            let probability = mvn_survival(&spec.model, &lower, n_rep, seed)?;
            Ok(SubsetProbability { subset, probability })
        })
        .collect::<Result<Vec<_>>>()?;
    for sp in &per_subset {
        let p = sp.probability;
        if p.value <= 5.0 * p.stderr {
            return Err(BrmError::IllConditionedK {
                subset: sp.subset.clone(),
                value: p.value,
                stderr: p.stderr,
            });
        }
    }
    let min = per_subset
        .iter()
        .min_by(|x, y| x.probability.value.total_cmp(&y.probability.value))
        .expect("at least one subset");
    let p = min.probability;
    Ok(KConstant {
        value: 1.0 / p.value,
        stderr: p.stderr / (p.value * p.value),
        argmin: min.subset.clone(),
        per_subset,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    /// `p_T(u)`.
    pub lower: McEstimate,
    /// `K p_T(u)`.
    pub upper: McEstimate,
    pub k_const: f64,
    pub k_stderr: f64,
    pub per_subset_k_terms: Vec<SubsetProbability>,
}

/// `p_T(u) <= psi_k(S, T, u) <= K p_T(u)`.
pub fn sandwich(spec: &RiskSpec, n_rep: u64, seed: u64) -> Result<BoundResult> {
    let lower = p_t(spec, n_rep, seed)?;
    let k = k_constant(spec, n_rep, seed)?;
    let value = k.value * lower.value;
    let stderr = (k.value * lower.stderr).hypot(lower.value * k.stderr);
    let upper = McEstimate {
        value,
        stderr,
        ci95: [k.value * lower.ci95[0], (value + Z95 * stderr).max(k.value * lower.ci95[1])],
        n_rep,
        seed,
    };
    Ok(BoundResult {
        lower,
        upper,
        k_const: k.value,
        k_stderr: k.stderr,
        per_subset_k_terms: k.per_subset,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    pub lower_stderr: f64,
    pub upper_stderr: f64,
}

/// Inclusion-exclusion bracket from the subset events `{exists t: all of I
/// fail at t}` and their pairwise intersections.
///
/// Pair keys are unordered; a pair given in both orders is counted once.
pub fn bonferroni(
    spec: &RiskSpec,
    per_subset: &BTreeMap<IndexSet, McEstimate>,
    pairwise: &BTreeMap<(IndexSet, IndexSet), McEstimate>,
) -> Result<Bracket> {
    let subsets = k_subsets(spec.dim(), spec.k);
    if let Some(extra) = per_subset.keys().find(|s| s.len() != spec.k || s.iter().any(|i| i >= spec.dim())) {
        return Err(BrmError::InvalidInput(format!("{extra} is not a {}-subset", spec.k)));
    }
    let mut upper = 0.0;
    let mut upper_var = 0.0;
    for s in &subsets {
        let e = per_subset
            .get(s)
            .ok_or_else(|| BrmError::InvalidInput(format!("missing subset estimate for {s}")))?;
        upper += e.value;
        upper_var += e.stderr * e.stderr;
    }
    let mut pairs: BTreeMap<(&IndexSet, &IndexSet), &McEstimate> = BTreeMap::new();
    for ((x, y), e) in pairwise {
        if x == y {
            return Err(BrmError::InvalidInput(format!("pair ({x}, {x}) is not a pair")));
        }
        if !per_subset.contains_key(x) || !per_subset.contains_key(y) {
            return Err(BrmError::InvalidInput(format!("pair ({x}, {y}) uses an unknown subset")));
        }
        let key = if x < y { (x, y) } else { (y, x) };
        pairs.entry(key).or_insert(e);
    }
    let pair_sum: f64 = pairs.values().map(|e| e.value).sum();
    let pair_var: f64 = pairs.values().map(|e| e.stderr * e.stderr).sum();
    Ok(Bracket {
        lower: (upper - pair_sum).max(0.0),
        upper,
        lower_stderr: (upper_var + pair_var).sqrt(),
        upper_stderr: upper_var.sqrt(),
    })
}

fn check_reps(n_rep: u64) -> Result<()> {
    if n_rep < crate::gauss::MIN_SURVIVAL_REPS {
        return Err(BrmError::Precondition(format!(
            "need n_rep >= {}, got {n_rep}",
            crate::gauss::MIN_SURVIVAL_REPS
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::CovModel;
    use crate::stats::normal_sf;
    use approx::assert_relative_eq;

    fn spec(model: CovModel, a: Vec<f64>, c: Vec<f64>, u: f64, k: usize) -> RiskSpec {
        RiskSpec::finite(model, a, c, u, k, 1.0).unwrap()
    }

    #[test]
    fn p_t_univariate_tail() {
        let s = spec(CovModel::identity(1), vec![1.0], vec![0.0], 1.0, 1);
        let e = p_t(&s, 200_000, 1).unwrap();
        assert!((e.value - normal_sf(1.0)).abs() <= 3.0 * e.stderr);
    }

    #[test]
    fn p_t_union_of_independent_tails() {
        let s = spec(CovModel::identity(2), vec![1.0, 1.0], vec![0.0, 0.0], 1.0, 1);
        let e = p_t(&s, 200_000, 2).unwrap();
        let truth = 1.0 - (1.0 - normal_sf(1.0)).powi(2);
        assert_relative_eq!(truth, 0.292_139_0, max_relative = 1e-6);
        assert!((e.value - truth).abs() <= 3.0 * e.stderr);
    }

    #[test]
    fn p_t_vanishing_tail() {
        let s = spec(CovModel::identity(1), vec![1.0], vec![0.0], 20.0, 1);
        let e = p_t(&s, 10_000, 3).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.contains(normal_sf(20.0)));
    }

    #[test]
    fn p_t_rejects_infinite_horizon() {
        let s = RiskSpec::new(CovModel::identity(1), vec![1.0], vec![1.0], 1.0, 1, 0.0, crate::Horizon::Infinite).unwrap();
        assert!(matches!(p_t(&s, 10_000, 0), Err(BrmError::Unsupported(_))));
    }

    #[test]
    fn k_constant_examples() {
        let n = 400_000;
        let k2 = k_constant(&spec(CovModel::identity(2), vec![1.0; 2], vec![0.0; 2], 1.0, 2), n, 4).unwrap();
        assert!((k2.value - 4.0).abs() <= 3.0 * k2.stderr, "{k2:?}");
        let k1 = k_constant(&spec(CovModel::identity(2), vec![1.0; 2], vec![0.0; 2], 1.0, 1), n, 4).unwrap();
        // antithetic pairs make a symmetric half-space probability exact
        assert_eq!(k1.value, 2.0);
        let corr = CovModel::equicorrelated(2, 0.5).unwrap();
        let kc = k_constant(&spec(corr, vec![1.0; 2], vec![0.0; 2], 1.0, 2), n, 4).unwrap();
        let orthant = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(1.0 / orthant, 3.0, max_relative = 1e-14);
        assert!((kc.value - 3.0).abs() <= 3.0 * kc.stderr, "{kc:?}");
    }

    #[test]
    fn k_constant_ignores_a_and_u() {
        let m = CovModel::equicorrelated(3, 0.2).unwrap();
        let base = k_constant(&spec(m.clone(), vec![1.0, 2.0, 0.5], vec![0.3, -0.2, 1.0], 1.0, 2), 20_000, 9).unwrap();
        for u in [0.5, 3.0, 10.0] {
            let other = k_constant(&spec(m.clone(), vec![-1.0, 0.1, 4.0], vec![0.3, -0.2, 1.0], u, 2), 20_000, 9).unwrap();
            assert_eq!(base.value.to_bits(), other.value.to_bits());
        }
    }

    #[test]
    fn k_constant_ill_conditioned() {
        let s = spec(CovModel::identity(1), vec![1.0], vec![10.0], 1.0, 1);
        assert!(matches!(k_constant(&s, 10_000, 1), Err(BrmError::IllConditionedK { .. })));
    }

    #[test]
    fn sandwich_orders_and_brackets_reflection_formula() {
        let s = spec(CovModel::identity(1), vec![1.0], vec![1.0], 2.0, 1);
        let b = sandwich(&s, 1_000_000, 5).unwrap();
        assert!(b.lower.value <= b.upper.value);
        assert!(b.k_const >= 1.0);
        let exact = normal_sf(3.0) + (-4.0f64).exp() * normal_sf(1.0);
        assert_relative_eq!(exact, 0.004_255_9, max_relative = 1e-4);
        assert!(b.lower.value - 3.0 * b.lower.stderr <= exact);
        assert!(exact <= b.upper.value + 3.0 * b.upper.stderr);
    }

    fn est(v: f64) -> McEstimate {
        McEstimate::exact(v, 1, 0)
    }

    #[test]
    fn bonferroni_cases() {
        let s = spec(CovModel::identity(3), vec![1.0; 3], vec![0.0; 3], 1.0, 2);
        let subsets = k_subsets(3, 2);
        let per: BTreeMap<_, _> = subsets.iter().cloned().zip([0.1, 0.2, 0.3].map(est)).collect();
        let b = bonferroni(&s, &per, &BTreeMap::new()).unwrap();
        assert_relative_eq!(b.lower, 0.6, epsilon = 1e-15);
        assert_relative_eq!(b.upper, 0.6, epsilon = 1e-15);

        let mut pairs = BTreeMap::new();
        pairs.insert((subsets[0].clone(), subsets[1].clone()), est(0.05));
        pairs.insert((subsets[1].clone(), subsets[0].clone()), est(0.05));
        pairs.insert((subsets[1].clone(), subsets[2].clone()), est(0.6));
        let b = bonferroni(&s, &per, &pairs).unwrap();
        assert_eq!(b.lower, 0.0);
        assert_relative_eq!(b.upper, 0.6, epsilon = 1e-15);

        let mut short = per.clone();
        short.remove(&subsets[2]);
        assert!(bonferroni(&s, &short, &BTreeMap::new()).is_err());

        let full = s.with_k(3).unwrap();
        let one: BTreeMap<_, _> = [(IndexSet::full(3), est(0.01))].into_iter().collect();
        let b = bonferroni(&full, &one, &BTreeMap::new()).unwrap();
        assert_eq!((b.lower, b.upper), (0.01, 0.01));
    }
}
