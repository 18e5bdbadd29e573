//! Dependence structure, Gaussian densities and orthant probabilities, and
//! correlated Brownian path sampling.

use nalgebra::{linalg::Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Serialize, Serializer};

use crate::error::{BrmError, Result};
use crate::index::IndexSet;
use crate::rng::{domain, run_blocks};
use crate::stats::{dot2, McEstimate, Moments};

/// Smallest accepted Cholesky pivot; below this the model is treated as singular.
pub const PIVOT_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// Covariance structure `Sigma = Gamma Gamma^T` of the driving Brownian motion,
/// with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovModel {
    dim: usize,
    gamma: Option<DMatrix<f64>>,
    sigma: DMatrix<f64>,
    chol: DMatrix<f64>,
    /// Row-major copy of the lower factor for the hot sampling loops.
    chol_flat: Vec<f64>,
    log_det: f64,
}

impl CovModel {
    pub fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if d == 0 || sigma.ncols() != d {
            return Err(BrmError::InvalidCovariance(format!(
                "sigma must be a non-empty square matrix, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(BrmError::InvalidCovariance("sigma has non-finite entries".into()));
        }
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                let scale = a.abs().max(b.abs()).max(1.0);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(BrmError::InvalidCovariance(format!(
                        "sigma is not symmetric at ({}, {}): {a} vs {b}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or_else(|| BrmError::InvalidCovariance("sigma is not positive definite".into()))?
            .l();
        if let Some(i) = (0..d).find(|&i| chol[(i, i)] <= PIVOT_TOL) {
            return Err(BrmError::InvalidCovariance(format!(
                "Cholesky pivot {} is {:e} <= {PIVOT_TOL:e}; sigma is numerically singular",
                i + 1,
                chol[(i, i)]
            )));
        }
        let log_det = 2.0 * (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>();
        let chol_flat = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| chol[(i, j)])
            .collect();
        Ok(CovModel {
            dim: d,
            gamma: None,
            sigma: sym,
            chol,
            chol_flat,
            log_det,
        })
    }

    /// Builds the model from a mixing matrix `Gamma`, with `Sigma = Gamma Gamma^T`.
    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() != gamma.ncols() {
            return Err(BrmError::InvalidCovariance("gamma must be square".into()));
        }
        let sigma = &gamma * gamma.transpose();
        let mut model = Self::from_sigma(sigma)?;
        model.gamma = Some(gamma);
        Ok(model)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_sigma(rows_to_matrix(rows)?)
    }

    pub fn gamma_from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_gamma(rows_to_matrix(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_sigma(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    /// Unit variances with common correlation `rho`.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        let sigma = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        Self::from_sigma(sigma)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn gamma(&self) -> Option<&DMatrix<f64>> {
        self.gamma.as_ref()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn sd(&self, i: usize) -> f64 {
        self.sigma[(i, i)].sqrt()
    }

    pub fn corr(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)] / (self.sd(i) * self.sd(j))
    }

    /// Model of the sub-vector `W_I`.
    pub fn restrict(&self, idx: &IndexSet) -> CovModel {
        let sub = self
            .sigma
            .select_rows(idx.as_slice())
            .select_columns(idx.as_slice());
        CovModel::from_sigma(sub).expect("principal submatrix of a PD matrix is PD")
    }

    /// Law of `W_target` given `W_given = value`: returns the conditional mean
    /// and the model of the centred conditional vector.
    pub fn conditional(&self, given: &IndexSet, value: &[f64], target: &IndexSet) -> (Vec<f64>, CovModel) {
        let g = self.restrict(given);
        let s_tg = self
            .sigma
            .select_rows(target.as_slice())
            .select_columns(given.as_slice());
        let mean = &s_tg * g.solve(value);
        let mut k = s_tg.transpose();
        g.chol.solve_lower_triangular_mut(&mut k);
        let s_tt = self
            .sigma
            .select_rows(target.as_slice())
            .select_columns(target.as_slice());
        let cov = s_tt - k.transpose() * k;
        let model = CovModel::from_sigma(cov).expect("Schur complement of a PD matrix is PD");
        (mean.iter().copied().collect(), model)
    }

    /// Model of `W(t)`, i.e. covariance `t * Sigma`.
    pub fn scaled(&self, t: f64) -> CovModel {
        assert!(t > 0.0, "time scale must be positive");
        CovModel::from_sigma(&self.sigma * t).expect("positive multiple of a PD matrix is PD")
    }

    /// `Sigma^{-1} b` through the Cholesky factor, refined twice with
    /// residuals in extended precision.
    pub fn solve(&self, b: &[f64]) -> DVector<f64> {
        let d = self.dim;
        let mut w = self.chol_solve(DVector::from_column_slice(b));
        // residual b - Sigma w as one dot product of length d + 1
        let (mut row, mut x) = (vec![-1.0; d + 1], vec![0.0; d + 1]);
        for _ in 0..2 {
            let mut r = DVector::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    row[j] = self.sigma[(i, j)];
                    x[j] = w[j];
                }
                x[d] = b[i];
                r[i] = -dot2(&row, &x);
            }
            w += self.chol_solve(r);
        }
        w
    }

    fn chol_solve(&self, mut w: DVector<f64>) -> DVector<f64> {
        self.chol.solve_lower_triangular_mut(&mut w);
        self.chol.tr_solve_lower_triangular_mut(&mut w);
        w
    }

    /// `x^T Sigma^{-1} x`.
    pub fn quad_inv(&self, x: &[f64]) -> f64 {
        let mut w = DVector::from_column_slice(x);
        self.chol.solve_lower_triangular_mut(&mut w);
        w.norm_squared()
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim as f64;
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + self.quad_inv(x))
    }

    /// `L z` for a standard normal vector `z`, written into `out`.
    #[inline]
    pub(crate) fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.chol_flat[i * d..i * d + i + 1];
            out[i] = row.iter().zip(z).map(|(l, z)| l * z).sum();
        }
    }
}

impl Serialize for CovModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let mut st = s.serialize_struct("CovModel", 2)?;
        st.serialize_field("sigma", &rows(&self.sigma))?;
        if let Some(g) = &self.gamma {
            st.serialize_field("gamma", &rows(g))?;
        }
        st.end()
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(BrmError::InvalidCovariance(
            "matrix must be given as d rows of length d".into(),
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(d, d, &flat))
}

/// Multivariate normal density `N(0, Sigma)` at `x`.
pub fn mvn_pdf(model: &CovModel, x: &[f64]) -> Result<f64> {
    check_len(model, x.len(), "x")?;
    Ok(model.log_pdf(x).exp())
}

/// Lower limit of one coordinate of an orthant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lower {
    /// The coordinate is unrestricted (marginalised out).
    Unbounded,
    /// The coordinate must be at least this value.
    At(f64),
}

impl Lower {
    #[inline]
    pub fn admits(self, x: f64) -> bool {
        match self {
            Lower::Unbounded => true,
            Lower::At(l) => x >= l,
        }
    }
}

/// Minimum replication count accepted by the survival estimators.
pub const MIN_SURVIVAL_REPS: u64 = 1000;

/// Monte Carlo estimate of `P(W(1) >= lower)` under `N(0, Sigma)`, with
/// antithetic pairs. `n_rep` counts Gaussian draws (pairs are `n_rep / 2`).
pub fn mvn_survival(model: &CovModel, lower: &[Lower], n_rep: u64, seed: u64) -> Result<McEstimate> {
    check_len(model, lower.len(), "lower")?;
    if n_rep < MIN_SURVIVAL_REPS {
        return Err(BrmError::Precondition(format!(
            "mvn_survival needs n_rep >= {MIN_SURVIVAL_REPS}, got {n_rep}"
        )));
    }
    if lower.iter().all(|l| *l == Lower::Unbounded) {
        return Ok(McEstimate::exact(1.0, n_rep, seed));
    }
    if lower.iter().any(|l| matches!(l, Lower::At(x) if x.is_nan())) {
        return Err(BrmError::InvalidInput("lower bound is NaN".into()));
    }
    let m = antithetic_mc(model, n_rep, seed, &[domain::SURVIVAL], |x| {
        lower.iter().zip(x).all(|(l, &v)| l.admits(v)) as u8 as f64
    });
    Ok(McEstimate::probability(&m, 2 * m.n, seed))
}

/// Averages `f` over antithetic pairs `(L z, -L z)`; the returned moments are
/// over pair means.
pub(crate) fn antithetic_mc<F>(model: &CovModel, n_rep: u64, seed: u64, tags: &[u64], f: F) -> Moments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let pairs = n_rep.div_ceil(2);
    let d = model.dim();
    let blocks = run_blocks(pairs, seed, tags, |rng, len| {
        let mut z = vec![0.0; d];
        let mut x = vec![0.0; d];
        let mut m = Moments::default();
        for _ in 0..len {
            fill_normal(rng, &mut z);
            model.correlate(&z, &mut x);
            let a = f(&x);
            x.iter_mut().for_each(|v| *v = -*v);
            let b = f(&x);
            m.push(0.5 * (a + b));
        }
        m
    });
    Moments::combine(&blocks)
}

#[inline]
pub(crate) fn fill_normal(rng: &mut ChaCha8Rng, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

fn check_len(model: &CovModel, len: usize, what: &str) -> Result<()> {
    if len != model.dim() {
        return Err(BrmError::DimensionMismatch(format!(
            "{what} has length {len}, model dimension is {}",
            model.dim()
        )));
    }
    Ok(())
}

/// Time discretisation of an interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathGrid {
    pub s_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub times: Vec<f64>,
}

impl PathGrid {
    /// `n_steps` equal steps from `s_start` to `t_end`.
    pub fn uniform(s_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(s_start >= 0.0 && t_end > s_start && t_end.is_finite()) {
            return Err(BrmError::InvalidInput(format!(
                "grid needs 0 <= s_start < t_end < inf, got [{s_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(BrmError::InvalidInput("grid needs at least one step".into()));
        }
        let h = (t_end - s_start) / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| s_start + i as f64 * h).collect();
        times[n_steps] = t_end;
        Ok(PathGrid {
            s_start,
            t_end,
            n_steps,
            times,
        })
    }

    /// Arbitrary strictly increasing times.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(BrmError::InvalidInput(
                "grid times must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(PathGrid {
            s_start: times[0],
            t_end: *times.last().unwrap(),
            n_steps: times.len() - 1,
            times,
        })
    }
}

/// Simulates `n_rep` paths of `W(t) - c t` on the grid. Each returned matrix is
/// `d x (n_steps + 1)` with column `j` the value at `grid.times[j]`; a path
/// whose grid starts at 0 starts at the zero vector.
pub fn sample_paths(
    model: &CovModel,
    drift_c: &[f64],
    grid: &PathGrid,
    n_rep: u64,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    check_len(model, drift_c.len(), "drift")?;
    let d = model.dim();
    let cols = grid.times.len();
    let blocks = run_blocks(n_rep, seed, &[domain::PATHS], |rng, len| {
        let mut z = vec![0.0; d];
        let mut inc = vec![0.0; d];
        let mut y = vec![0.0; d];
        (0..len)
            .map(|_| {
                let mut path = DMatrix::zeros(d, cols);
                y.iter_mut().for_each(|v| *v = 0.0);
                let mut t = 0.0;
                for (j, &tj) in grid.times.iter().enumerate() {
                    let h = tj - t;
                    if h > 0.0 {
                        fill_normal(rng, &mut z);
                        model.correlate(&z, &mut inc);
                        let sh = h.sqrt();
                        for i in 0..d {
                            y[i] += sh * inc[i] - drift_c[i] * h;
                        }
                    }
                    t = tj;
                    path.column_mut(j).copy_from_slice(&y);
                }
                path
            })
            .collect::<Vec<_>>()
    });
    Ok(blocks.into_iter().flatten().collect())
}
