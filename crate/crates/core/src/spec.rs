//! Problem instances: thresholds `a u`, drifts `c`, the failure count `k` and
//! the time window.

use serde::Serialize;

use crate::error::{BrmError, Result};
use crate::gauss::CovModel;
use crate::index::IndexSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

/// The risk process is `u a + c t - W(t)`; component `i` fails at `t` when
/// `W_i(t) - c_i t > a_i u`. The question is whether at least `k` components
/// fail at the same time somewhere in `[s_start, horizon]`.
#[derive(Debug, Clone, Serialize)]
pub struct RiskSpec {
    pub model: CovModel,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub u: f64,
    pub k: usize,
    pub s_start: f64,
    pub horizon: Horizon,
}

impl RiskSpec {
    pub fn new(
        model: CovModel,
        a: Vec<f64>,
        c: Vec<f64>,
        u: f64,
        k: usize,
        s_start: f64,
        horizon: Horizon,
    ) -> Result<Self> {
        let d = model.dim();
        if a.len() != d || c.len() != d {
            return Err(BrmError::DimensionMismatch(format!(
                "a and c must have length {d}, got {} and {}",
                a.len(),
                c.len()
            )));
        }
        if a.iter().chain(&c).any(|x| !x.is_finite()) {
            return Err(BrmError::InvalidInput("a and c must be finite".into()));
        }
        if !(u > 0.0 && u.is_finite()) {
            return Err(BrmError::InvalidInput(format!("u must be positive, got {u}")));
        }
        if k == 0 || k > d {
            return Err(BrmError::InvalidInput(format!("k must lie in [1, {d}], got {k}")));
        }
        if !(s_start >= 0.0 && s_start.is_finite()) {
            return Err(BrmError::InvalidInput(format!("s_start must be >= 0, got {s_start}")));
        }
        if let Horizon::Finite(t) = horizon {
            if !(t > s_start && t.is_finite()) {
                return Err(BrmError::InvalidInput(format!(
                    "horizon T = {t} must exceed s_start = {s_start}"
                )));
            }
        }
        Ok(RiskSpec {
            model,
            a,
            c,
            u,
            k,
            s_start,
            horizon,
        })
    }

    /// Convenience constructor with `S = 0`.
    pub fn finite(model: CovModel, a: Vec<f64>, c: Vec<f64>, u: f64, k: usize, t: f64) -> Result<Self> {
        Self::new(model, a, c, u, k, 0.0, Horizon::Finite(t))
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Thresholds `a u`.
    pub fn levels(&self) -> Vec<f64> {
        self.a.iter().map(|a| a * self.u).collect()
    }

    pub fn finite_t(&self) -> Result<f64> {
        match self.horizon {
            Horizon::Finite(t) => Ok(t),
            Horizon::Infinite => Err(BrmError::Unsupported(
                "this operation needs a finite horizon".into(),
            )),
        }
    }

    pub fn with_u(&self, u: f64) -> Result<Self> {
        Self::new(
            self.model.clone(),
            self.a.clone(),
            self.c.clone(),
            u,
            self.k,
            self.s_start,
            self.horizon,
        )
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(
            self.model.clone(),
            self.a.clone(),
            self.c.clone(),
            self.u,
            k,
            self.s_start,
            self.horizon,
        )
    }

    /// The sub-model of the components in `idx`, with `k = |idx|`.
    pub fn restrict(&self, idx: &IndexSet) -> Self {
        RiskSpec {
            model: self.model.restrict(idx),
            a: idx.select(&self.a),
            c: idx.select(&self.c),
            u: self.u,
            k: idx.len(),
            s_start: self.s_start,
            horizon: self.horizon,
        }
    }

    /// Rescales a finite horizon to `T = 1` by Brownian self-similarity:
    /// `(a, c, u, S) -> (a, c sqrt(T), u / sqrt(T), S / T)`.
    pub fn unit_horizon(&self) -> Result<Self> {
        let t = self.finite_t()?;
        let st = t.sqrt();
        Ok(RiskSpec {
            model: self.model.clone(),
            a: self.a.clone(),
            c: self.c.iter().map(|c| c * st).collect(),
            u: self.u / st,
            k: self.k,
            s_start: self.s_start / t,
            horizon: Horizon::Finite(1.0),
        })
    }

    /// Finite-horizon asymptotics need `a` to have at most `k - 1`
    /// non-positive components.
    pub fn check_finite_asymptotic(&self) -> Result<()> {
        let nonpos = self.a.iter().filter(|&&a| a <= 0.0).count();
        if nonpos + 1 > self.k {
            return Err(BrmError::Precondition(format!(
                "a has {nonpos} non-positive components, at most k - 1 = {} allowed",
                self.k - 1
            )));
        }
        Ok(())
    }

    /// Infinite-horizon conditions: `c` and every `a + c t`, `t >= 0`, have at
    /// most `k - 1` non-positive components.
    pub fn check_infinite_conditions(&self) -> Result<()> {
        let allowed = self.k - 1;
        let count = |v: &mut dyn Iterator<Item = f64>| v.filter(|&x| x <= 0.0).count();
        let nc = count(&mut self.c.iter().copied());
        if nc > allowed {
            return Err(BrmError::SignCondition(format!(
                "c has {nc} non-positive components, at most {allowed} allowed"
            )));
        }
        // The sign pattern of a + c t only changes at the crossings -a_i / c_i.
        let mut probes = vec![0.0];
        let mut crossings: Vec<f64> = self
            .a
            .iter()
            .zip(&self.c)
            .filter(|(_, &c)| c != 0.0)
            .map(|(&a, &c)| -a / c)
            .filter(|&t| t > 0.0)
            .collect();
        crossings.sort_by(f64::total_cmp);
        probes.extend(&crossings);
        probes.extend(crossings.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        if let Some(&first) = crossings.first() {
            probes.push(0.5 * first);
        }
        probes.push(crossings.last().map_or(1.0, |t| 2.0 * t + 1.0));
        for t in probes {
            let n = count(&mut self.a.iter().zip(&self.c).map(|(a, c)| a + c * t));
            if n > allowed {
                return Err(BrmError::SignCondition(format!(
                    "a + c t has {n} non-positive components at t = {t}, at most {allowed} allowed"
                )));
            }
        }
        Ok(())
    }
}
