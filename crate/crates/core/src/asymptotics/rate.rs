//! The infinite-horizon rate function
//! `r_I(t) = min_{x >= a_I + c_I t} x^T (Sigma_II)^{-1} x / t`.

use serde::Serialize;

use crate::error::{BrmError, Result};
use crate::gauss::CovModel;
use crate::index::IndexSet;
use crate::qp::solve_pi_sigma;
use crate::spec::RiskSpec;

/// Tolerance on the minimiser.
pub const T_TOL: f64 = 1e-8;
const MAX_BRACKET_STEPS: usize = 200;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Serialize)]
pub struct RateFunction {
    pub subset: IndexSet,
    pub t_hat: f64,
    pub r_min: f64,
    #[serde(skip)]
    model: CovModel,
    #[serde(skip)]
    a: Vec<f64>,
    #[serde(skip)]
    c: Vec<f64>,
}

/// `r(t)` for the model `model` and vectors `a`, `c` of the same dimension.
pub fn rate_value(model: &CovModel, a: &[f64], c: &[f64], t: f64) -> f64 {
    let b: Vec<f64> = a.iter().zip(c).map(|(a, c)| a + c * t).collect();
    if b.iter().all(|&x| x <= 0.0) {
        // x = 0 is feasible
        return 0.0;
    }
    match solve_pi_sigma(model, &b) {
        Ok(sol) => sol.value / t,
        Err(_) => f64::NAN,
    }
}

impl RateFunction {
    /// Locates the minimiser of `r` for the sub-model on `subset`.
    pub fn new(model: &CovModel, a: &[f64], c: &[f64], subset: IndexSet) -> Result<Self> {
        if c.iter().all(|&x| x <= 0.0) {
            return Err(BrmError::NoMinimizer(format!(
                "c restricted to {subset} has no positive component"
            )));
        }
        let model = model.clone();
        let r = |t: f64| rate_value(&model, a, c, t);

        let mut hi = 1.0;
        let mut steps = 0;
        while !(r(hi) > r(0.5 * hi)) {
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(BrmError::NoMinimizer(format!("r does not grow on {subset}")));
            }
        }
        let mut lo = 1.0;
        steps = 0;
        while !(r(lo) > r(2.0 * lo)) {
            lo *= 0.5;
            steps += 1;
            if steps > MAX_BRACKET_STEPS {
                return Err(BrmError::NoMinimizer(format!("r does not blow up at 0 on {subset}")));
            }
        }
        // by convexity the minimiser lies in (lo, hi)
        let (mut x0, mut x3) = (lo, hi);
        let mut x1 = x3 - INV_PHI * (x3 - x0);
        let mut x2 = x0 + INV_PHI * (x3 - x0);
        let (mut f1, mut f2) = (r(x1), r(x2));
        while x3 - x0 > T_TOL * x0.max(1.0) {
            if f1 <= f2 {
                x3 = x2;
                x2 = x1;
                f2 = f1;
                x1 = x3 - INV_PHI * (x3 - x0);
                f1 = r(x1);
            } else {
                x0 = x1;
                x1 = x2;
                f1 = f2;
                x2 = x0 + INV_PHI * (x3 - x0);
                f2 = r(x2);
            }
        }
        let t_hat = 0.5 * (x0 + x3);
        let r_min = r(t_hat);
        Ok(RateFunction {
            subset,
            t_hat,
            r_min,
            model,
            a: a.to_vec(),
            c: c.to_vec(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        rate_value(&self.model, &self.a, &self.c, t)
    }
}

/// Rate function of the components in `subset` of `spec`.
pub fn rate_function(spec: &RiskSpec, subset: &IndexSet) -> Result<RateFunction> {
    let r = spec.restrict(subset);
    RateFunction::new(&r.model, &r.a, &r.c, subset.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_d(a: f64, c: f64) -> RateFunction {
        RateFunction::new(&CovModel::identity(1), &[a], &[c], IndexSet::full(1)).unwrap()
    }

    #[test]
    fn one_dimensional_minimum() {
        let r = one_d(1.0, 1.0);
        assert_relative_eq!(r.eval(2.0), 4.5, max_relative = 1e-15);
        assert!((r.t_hat - 1.0).abs() < 1e-7);
        assert_relative_eq!(r.r_min, 4.0, max_relative = 1e-13);
        let r = one_d(2.0, 3.0);
        assert!((r.t_hat - 2.0 / 3.0).abs() < 1e-7);
        assert_relative_eq!(r.r_min, 24.0, max_relative = 1e-13);
    }

    #[test]
    fn no_minimizer_without_positive_drift() {
        let e = RateFunction::new(&CovModel::identity(2), &[1.0, 1.0], &[0.0, -1.0], IndexSet::full(2));
        assert!(matches!(e, Err(BrmError::NoMinimizer(_))));
    }

    #[test]
    fn diverges_at_both_ends() {
        let m = CovModel::equicorrelated(2, 0.3).unwrap();
        let r = RateFunction::new(&m, &[1.0, 0.5], &[0.5, 2.0], IndexSet::full(2)).unwrap();
        assert!(r.eval(1e-6) > 1e5);
        assert!(r.eval(1e6) > 1e5);
        assert!(r.eval(r.t_hat) <= r.eval(r.t_hat * 1.01));
        assert!(r.eval(r.t_hat) <= r.eval(r.t_hat * 0.99));
    }
}
