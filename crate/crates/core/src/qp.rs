//! The quadratic program `minimise x^T Sigma^{-1} x subject to x >= a`.
//!
//! The minimiser `a~` is characterised by an index set `I`:
//!
//! ```text
//!   a~_I = a_I,   (Sigma_II)^{-1} a_I > 0,   a~_J = Sigma_JI (Sigma_II)^{-1} a_I >= a_J
//! ```
//!
//! with `J` the complement of `I`. For the small dimensions used here every
//! candidate `I` is enumerated and checked against these conditions; all
//! solves go through the Cholesky factor of `Sigma_II`.

use serde::Serialize;

use crate::error::{BrmError, NearMiss, Result};
use crate::gauss::CovModel;
use crate::index::IndexSet;
use crate::stats::dot2;

/// Activity tolerance for the strict KKT inequalities.
pub const TAU_ACT: f64 = 1e-9;
/// Largest dimension handled by exhaustive enumeration.
pub const MAX_QP_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    pub a_tilde: Vec<f64>,
    pub index_i: IndexSet,
    pub index_j: IndexSet,
    /// Components of `J` where the solution touches the constraint.
    pub index_u: IndexSet,
    /// `Sigma^{-1} a~`.
    pub lambda: Vec<f64>,
    /// `a~^T Sigma^{-1} a~`.
    pub value: f64,
    pub m: usize,
    /// More than one candidate set satisfied the KKT conditions within
    /// tolerance; the smallest one was kept.
    pub boundary_degenerate: bool,
}

struct Candidate {
    set: IndexSet,
    a_tilde: Vec<f64>,
    lambda_i: Vec<f64>,
    value: f64,
    violation: f64,
}

fn evaluate(model: &CovModel, a: &[f64], set: IndexSet) -> Candidate {
    let d = model.dim();
    let sub = model.restrict(&set);
    let a_i = set.select(a);
    let lambda_i = sub.solve(&a_i);
    let value = dot2(&a_i, lambda_i.as_slice());
    let sigma = model.sigma();
    let mut a_tilde = vec![0.0; d];
    for (j, at) in a_tilde.iter_mut().enumerate() {
        *at = if set.contains(j) {
            a[j]
        } else {
            set.iter()
                .zip(lambda_i.iter())
                .map(|(i, l)| sigma[(j, i)] * l)
                .sum()
        };
    }
    let mut violation = lambda_i
        .iter()
        .map(|&l| TAU_ACT - l)
        .fold(f64::NEG_INFINITY, f64::max);
    for j in (0..d).filter(|&j| !set.contains(j)) {
        violation = violation.max(a[j] - TAU_ACT - a_tilde[j]);
    }
    Candidate {
        set,
        a_tilde,
        lambda_i: lambda_i.iter().copied().collect(),
        value,
        violation,
    }
}

impl Candidate {
    fn passes(&self) -> bool {
        // λ_I > τ (strict) and ã_J ≥ a_J − τ
        self.lambda_i.iter().all(|&l| l > TAU_ACT) && self.violation <= 0.0
    }
}

/// Solves the quadratic program for threshold vector `a`.
pub fn solve_pi_sigma(model: &CovModel, a: &[f64]) -> Result<QpSolution> {
    let d = model.dim();
    if a.len() != d {
        return Err(BrmError::DimensionMismatch(format!(
            "a has length {}, model dimension is {d}",
            a.len()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(BrmError::InvalidInput("a has non-finite entries".into()));
    }
    if a.iter().all(|&x| x <= 0.0) {
        return Err(BrmError::AllNonpositive);
    }
    if d > MAX_QP_DIM {
        return Err(BrmError::Unsupported(format!(
            "exhaustive active-set enumeration is limited to d <= {MAX_QP_DIM}, got {d}"
        )));
    }

    let candidates: Vec<Candidate> = (1u64..1 << d)
        .map(|mask| evaluate(model, a, IndexSet::from_mask(mask, d)))
        .collect();
    let mut passing: Vec<&Candidate> = candidates.iter().filter(|c| c.passes()).collect();
    if passing.is_empty() {
        let mut near: Vec<&Candidate> = candidates.iter().collect();
        near.sort_by(|x, y| x.violation.total_cmp(&y.violation));
        return Err(BrmError::Degenerate {
            near_misses: near
                .iter()
                .take(2)
                .map(|c| NearMiss {
                    index_set: c.set.clone(),
                    violation: c.violation,
                })
                .collect(),
        });
    }
    // Tie-break: smallest |I|, then smallest value, then lexicographic.
    passing.sort_by(|x, y| {
        x.set
            .len()
            .cmp(&y.set.len())
            .then(x.value.total_cmp(&y.value))
            .then(x.set.cmp(&y.set))
    });
    let degenerate = passing.len() > 1;
    let best = passing[0];
    Ok(finish(model, a, best, degenerate))
}

fn finish(model: &CovModel, a: &[f64], c: &Candidate, degenerate: bool) -> QpSolution {
    let d = model.dim();
    let index_j = c.set.complement(d);
    let index_u = IndexSet::new(
        index_j
            .iter()
            .filter(|&j| (c.a_tilde[j] - a[j]).abs() <= TAU_ACT)
            .collect(),
    );
    let mut lambda = vec![0.0; d];
    for (i, l) in c.set.iter().zip(&c.lambda_i) {
        lambda[i] = *l;
    }
    QpSolution {
        a_tilde: c.a_tilde.clone(),
        m: c.set.len(),
        index_i: c.set.clone(),
        index_j,
        index_u,
        lambda,
        value: c.value,
        boundary_degenerate: degenerate,
    }
}

/// Checks `x^T Sigma^{-1} a~ = x_F^T (Sigma_FF)^{-1} a~_F` for an index set
/// `F` containing `I`.
pub fn verify_representation(model: &CovModel, sol: &QpSolution, x: &[f64], f: &IndexSet) -> Result<bool> {
    if !f.is_superset_of(&sol.index_i) {
        return Err(BrmError::Precondition(format!(
            "F = {f} does not contain I = {}",
            sol.index_i
        )));
    }
    if x.len() != model.dim() || f.iter().any(|i| i >= model.dim()) {
        return Err(BrmError::DimensionMismatch("x or F does not match the model".into()));
    }
    let full = model.solve(&sol.a_tilde).iter().zip(x).map(|(l, x)| l * x).sum::<f64>();
    let sub = model.restrict(f);
    let restricted: f64 = sub
        .solve(&f.select(&sol.a_tilde))
        .iter()
        .zip(f.select(x))
        .map(|(l, x)| l * x)
        .sum();
    Ok((full - restricted).abs() <= 1e-8 * (1.0 + full.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_both_active() {
        let s = solve_pi_sigma(&CovModel::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(s.index_i.as_slice(), &[0, 1]);
        assert_eq!(s.a_tilde, vec![1.0, 1.0]);
        assert_eq!(s.lambda, vec![1.0, 1.0]);
        assert_eq!(s.value, 2.0);
        assert!(s.index_j.is_empty() && s.index_u.is_empty());
        assert!(!s.boundary_degenerate);
    }

    #[test]
    fn correlated_single_active() {
        // enumeration by hand: I={1}: λ=1, ã2=0.5 >= 0.2 passes; I={2}: ã1=0.1 < 1
        // fails; I={1,2}: λ2 = (0.2-0.5)/0.75 < 0 fails.
        let m = CovModel::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = solve_pi_sigma(&m, &[1.0, 0.2]).unwrap();
        assert_eq!(s.index_i.as_slice(), &[0]);
        assert_eq!(s.index_j.as_slice(), &[1]);
        assert!(s.index_u.is_empty());
        assert_relative_eq!(s.a_tilde[1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.lambda[0], 1.0, epsilon = 1e-14);
        assert!(s.lambda[1].abs() < 1e-14);
        assert_relative_eq!(s.value, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn equicorrelated_full_set() {
        let m = CovModel::equicorrelated(3, 0.5).unwrap();
        let s = solve_pi_sigma(&m, &[1.0; 3]).unwrap();
        assert_eq!(s.m, 3);
        for l in &s.lambda {
            assert_relative_eq!(*l, 0.5, epsilon = 1e-14);
        }
        assert_relative_eq!(s.value, 1.5, epsilon = 1e-13);
    }

    #[test]
    fn errors() {
        let m = CovModel::identity(2);
        assert!(matches!(solve_pi_sigma(&m, &[0.0, -1.0]), Err(BrmError::AllNonpositive)));
        assert!(matches!(solve_pi_sigma(&m, &[1.0]), Err(BrmError::DimensionMismatch(_))));
    }

    #[test]
    fn boundary_touching_is_reported_in_u() {
        // Σ = I, a = (1, 0): λ2 = 0 exactly, ã2 = a2, so j=2 lies in U and the
        // full set {1,2} ties at the boundary.
        let s = solve_pi_sigma(&CovModel::identity(2), &[1.0, 0.0]).unwrap();
        assert_eq!(s.index_i.as_slice(), &[0]);
        assert_eq!(s.index_u.as_slice(), &[1]);
        assert!(!s.boundary_degenerate); // λ2 = 0 fails the strict test on {1,2}
    }

    #[test]
    fn representation_examples() {
        let m = CovModel::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let s = solve_pi_sigma(&m, &[1.0, 0.2]).unwrap();
        assert!(verify_representation(&m, &s, &[3.0, -7.0], &IndexSet::new(vec![0])).unwrap());
        assert!(verify_representation(&m, &s, &[3.0, -7.0], &IndexSet::full(2)).unwrap());
        // I = {1} is not inside F = {2}
        assert!(verify_representation(&m, &s, &[3.0, -7.0], &IndexSet::new(vec![1])).is_err());
    }
}
