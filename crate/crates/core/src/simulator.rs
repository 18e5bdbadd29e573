//! Path simulation of the simultaneous failure event.
//!
//! A path is the process `Y(t) = W(t) - c t` started at 0. It is checked at
//! the monitoring times in `[S, T]`: a hit is a time at which at least `k`
//! components satisfy `Y_i(t) > a_i u`. Between two monitoring times the
//! Brownian bridge midpoint is also drawn and checked, which gives a second,
//! finer estimate on the same paths; both are downward biased and the fine
//! one never lies below the coarse one.
//!
//! Monitoring times are either a uniform grid or adaptive: the step is chosen
//! so that the components that would complete a hit stay `sqrt(kappa)`
//! standard deviations away from their thresholds over the step, down to a
//! floor `h_min`.
//!
//! Optionally the paths are drawn with an extra drift `theta` and reweighted
//! by the likelihood ratio at the stopping time.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::rate::rate_function;
use crate::error::{BrmError, Result};
use crate::gauss::{fill_normal, CovModel, PathGrid};
use crate::index::{k_subsets, IndexSet};
use crate::qp::solve_pi_sigma;
use crate::rng::{block_rng, domain, job_key, rep_rng, run_chunks};
use crate::spec::{Horizon, RiskSpec};
use crate::stats::{McEstimate, Moments};

/// Smallest uniform grid accepted by [`simulate_psi`].
pub const MIN_UNIFORM_STEPS: usize = 256;
/// Fewest conditional failure times accepted by [`sample_failure_time`].
pub const MIN_FAILURE_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Monitor {
    Uniform { n_steps: usize },
    Adaptive { h_min: f64, h_max: f64, kappa: f64 },
}

impl Monitor {
    pub fn adaptive() -> Self {
        Monitor::Adaptive {
            h_min: 1e-6,
            h_max: 1.0,
            kappa: 36.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Monitor::Uniform { n_steps } if n_steps < MIN_UNIFORM_STEPS => Err(BrmError::Precondition(format!(
                "uniform monitoring needs n_steps >= {MIN_UNIFORM_STEPS}, got {n_steps}"
            ))),
            Monitor::Adaptive { h_min, h_max, kappa }
                if !(h_min > 0.0 && h_max >= h_min && h_max.is_finite() && kappa > 0.0) =>
            {
                Err(BrmError::InvalidInput(format!(
                    "adaptive monitoring needs 0 < h_min <= h_max < inf and kappa > 0, got {self:?}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimOptions {
    pub monitor: Monitor,
    /// Extra drift of the sampling law; `None` is plain Monte Carlo.
    #[serde(default)]
    pub tilt: Option<Vec<f64>>,
    /// Keep the hit times of the coarse monitor (plain Monte Carlo only).
    #[serde(default)]
    pub emit_times: bool,
}

impl SimOptions {
    pub fn new(monitor: Monitor) -> Self {
        SimOptions {
            monitor,
            tilt: None,
            emit_times: false,
        }
    }

    pub fn with_tilt(mut self, tilt: Vec<f64>) -> Self {
        self.tilt = Some(tilt);
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub coarse: McEstimate,
    pub fine: McEstimate,
    /// Paired standard error of `fine - coarse`.
    pub difference_stderr: f64,
    /// The two estimates differ by more than 3 joint standard errors.
    pub grid_bias_warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    /// Estimate on the requested monitor.
    pub psi_hat: McEstimate,
    pub n_paths: u64,
    pub monitor: Monitor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathGrid>,
    pub t_start: f64,
    pub t_end: f64,
    /// Average number of monitoring steps per path.
    pub mean_steps: f64,
    pub refinement_check: Refinement,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<f64>>,
    /// Coarse hit times, for `emit_times`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hitting_times: Option<Vec<f64>>,
    /// `(u / 2) min_I r_I(t_end / u)`: log-scale size of the mass beyond the
    /// cap, for the infinite horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_log_rate: Option<f64>,
}

enum Mode {
    Count(usize),
    Subsets(Vec<Vec<usize>>),
}

struct Tilt {
    theta: Vec<f64>,
    sinv_theta: Vec<f64>,
    quad: f64,
}

struct Kernel<'a> {
    model: &'a CovModel,
    d: usize,
    level: Vec<f64>,
    c: Vec<f64>,
    sd: Vec<f64>,
    drift: Vec<f64>,
    /// Largest drift toward the thresholds, in standard deviations per unit time.
    v: f64,
    start: f64,
    end: f64,
    monitor: Monitor,
    tilt: Option<Tilt>,
    mode: Mode,
}

#[derive(Default)]
struct Outcome {
    coarse: bool,
    fine: bool,
    weight: f64,
    tau: f64,
    steps: u64,
    subset_hits: u64,
}

struct Scratch {
    y: Vec<f64>,
    next: Vec<f64>,
    mid: Vec<f64>,
    z: Vec<f64>,
    inc: Vec<f64>,
    dist: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            y: vec![0.0; d],
            next: vec![0.0; d],
            mid: vec![0.0; d],
            z: vec![0.0; d],
            inc: vec![0.0; d],
            dist: vec![0.0; d],
        }
    }
}

impl<'a> Kernel<'a> {
    fn new(spec: &'a RiskSpec, start: f64, end: f64, monitor: Monitor, tilt: Option<&[f64]>, mode: Mode) -> Result<Self> {
        monitor.validate()?;
        let d = spec.dim();
        let model = &spec.model;
        let tilt = match tilt {
            None => None,
            Some(theta) => {
                if theta.len() != d || theta.iter().any(|x| !x.is_finite()) {
                    return Err(BrmError::DimensionMismatch(format!(
                        "tilt must be a finite vector of length {d}"
                    )));
                }
                let sinv: Vec<f64> = model.solve(theta).iter().copied().collect();
                let quad = theta.iter().zip(&sinv).map(|(a, b)| a * b).sum();
                Some(Tilt {
                    theta: theta.to_vec(),
                    sinv_theta: sinv,
                    quad,
                })
            }
        };
        let sd: Vec<f64> = (0..d).map(|i| model.sd(i)).collect();
        let drift: Vec<f64> = (0..d)
            .map(|i| tilt.as_ref().map_or(0.0, |t| t.theta[i]) - spec.c[i])
            .collect();
        let v = drift.iter().zip(&sd).map(|(m, s)| m / s).fold(0.0, f64::max);
        Ok(Kernel {
            model,
            d,
            level: spec.levels(),
            c: spec.c.clone(),
            sd,
            drift,
            v,
            start,
            end,
            monitor,
            tilt,
            mode,
        })
    }

    #[inline]
    fn count_hit(&self, y: &[f64], k: usize) -> bool {
        y.iter().zip(&self.level).filter(|(y, l)| y > l).count() >= k
    }

    #[inline]
    fn subset_hit(&self, y: &[f64], s: &[usize]) -> bool {
        s.iter().all(|&i| y[i] > self.level[i])
    }

    /// Updates the hit state at a monitoring point; true when the path can stop.
    fn check(&self, y: &[f64], out: &mut Outcome) -> bool {
        match &self.mode {
            Mode::Count(k) => self.count_hit(y, *k),
            Mode::Subsets(subsets) => {
                for (b, s) in subsets.iter().enumerate() {
                    if out.subset_hits >> b & 1 == 0 && self.subset_hit(y, s) {
                        out.subset_hits |= 1 << b;
                    }
                }
                out.subset_hits.count_ones() as usize == subsets.len()
            }
        }
    }

    /// Normalised distance to the nearest completion of a hit.
    fn event_distance(&self, y: &[f64], out: &Outcome, dist: &mut [f64]) -> f64 {
        for i in 0..self.d {
            dist[i] = (self.level[i] - y[i]) / self.sd[i];
        }
        match &self.mode {
            Mode::Count(k) => {
                let (_, kth, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
                *kth
            }
            Mode::Subsets(subsets) => subsets
                .iter()
                .enumerate()
                .filter(|(b, _)| out.subset_hits >> b & 1 == 0)
                .map(|(_, s)| s.iter().map(|&i| dist[i]).fold(f64::NEG_INFINITY, f64::max))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn step_size(&self, t: f64, y: &[f64], out: &Outcome, dist: &mut [f64]) -> f64 {
        let left = self.end - t;
        match self.monitor {
            Monitor::Uniform { n_steps } => (self.end - self.start) / n_steps as f64,
            Monitor::Adaptive { h_min, h_max, kappa } => {
                let dd = self.event_distance(y, out, dist).max(0.0);
                // largest h with dd - v h >= sqrt(kappa h)
                let h = if self.v > 0.0 {
                    let s = (-kappa.sqrt() + (kappa + 4.0 * self.v * dd).sqrt()) / (2.0 * self.v);
                    s * s
                } else {
                    dd * dd / kappa
                };
                h.clamp(h_min, h_max).min(left)
            }
        }
    }

    fn advance(&self, rng: &mut ChaCha8Rng, s: &mut Scratch, h: f64) {
        fill_normal(rng, &mut s.z);
        self.model.correlate(&s.z, &mut s.inc);
        let sh = h.sqrt();
        for i in 0..self.d {
            s.next[i] = s.y[i] + sh * s.inc[i] + self.drift[i] * h;
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng, s: &mut Scratch) -> Outcome {
        let mut out = Outcome {
            tau: f64::NAN,
            ..Default::default()
        };
        s.y.iter_mut().for_each(|v| *v = 0.0);
        let mut t = 0.0;
        if self.start > 0.0 {
            self.advance(rng, s, self.start);
            std::mem::swap(&mut s.y, &mut s.next);
            t = self.start;
        }
        let mut stop = self.check(&s.y, &mut out);
        if stop {
            out.coarse = true;
            out.fine = true;
            out.tau = t;
        }
        let uniform_steps = match self.monitor {
            Monitor::Uniform { n_steps } => Some(n_steps),
            Monitor::Adaptive { .. } => None,
        };
        while !stop && t < self.end {
            let h = self.step_size(t, &s.y, &out, &mut s.dist);
            self.advance(rng, s, h);
            // bridge midpoint: mean halfway, covariance h / 4 Sigma
            fill_normal(rng, &mut s.z);
            self.model.correlate(&s.z, &mut s.inc);
            let half = 0.5 * h.sqrt();
            for i in 0..self.d {
                s.mid[i] = 0.5 * (s.y[i] + s.next[i]) + half * s.inc[i];
            }
            if !out.fine {
                let mut probe = Outcome {
                    subset_hits: out.subset_hits,
                    ..Default::default()
                };
                match &self.mode {
                    Mode::Count(_) => out.fine = self.check(&s.mid, &mut probe),
                    // subset events are only tracked on the coarse monitor
                    Mode::Subsets(_) => {}
                }
            }
            std::mem::swap(&mut s.y, &mut s.next);
            out.steps += 1;
            t = match uniform_steps {
                Some(n) if out.steps as usize >= n => self.end,
                Some(_) => self.start + out.steps as f64 * h,
                None if self.end - (t + h) <= 0.0 => self.end,
                None => t + h,
            };
            if self.check(&s.y, &mut out) {
                stop = true;
                out.coarse = true;
                out.fine = true;
                out.tau = t;
            }
        }
        if let Mode::Subsets(_) = self.mode {
            out.coarse = out.subset_hits != 0;
            out.fine = out.coarse;
        }
        out.weight = match &self.tilt {
            None => 1.0,
            Some(tl) => {
                // dP/dQ at the stopping time; W = Y + c t under the sampling law
                let lin: f64 = (0..self.d)
                    .map(|i| tl.sinv_theta[i] * (s.y[i] + self.c[i] * t))
                    .sum();
                (-lin + 0.5 * tl.quad * t).exp()
            }
        };
        out
    }
}

struct Tally {
    coarse: Moments,
    fine: Moments,
    diff: Moments,
    steps: u64,
    times: Vec<f64>,
    weights: Vec<f64>,
    subset_counts: Vec<u64>,
    pair_counts: Vec<u64>,
}

fn run_kernel(kernel: &Kernel, n_rep: u64, seed: u64, tags: &[u64], keep_times: bool) -> Tally {
    let key = job_key(seed, tags);
    let n_sub = match &kernel.mode {
        Mode::Subsets(s) => s.len(),
        Mode::Count(_) => 0,
    };
    let blocks = run_chunks(n_rep, |first, len| {
        let mut s = Scratch::new(kernel.d);
        let mut tally = Tally {
            coarse: Moments::default(),
            fine: Moments::default(),
            diff: Moments::default(),
            steps: 0,
            times: Vec::new(),
            weights: Vec::new(),
            subset_counts: vec![0; n_sub],
            pair_counts: vec![0; n_sub * n_sub],
        };
        for r in first..first + len {
            let mut rng = rep_rng(&key, r);
            let o = kernel.run(&mut rng, &mut s);
            let c = if o.coarse { o.weight } else { 0.0 };
            let f = if o.fine { o.weight } else { 0.0 };
            tally.coarse.push(c);
            tally.fine.push(f);
            tally.diff.push(f - c);
            tally.steps += o.steps;
            if keep_times && o.coarse {
                tally.times.push(o.tau);
                tally.weights.push(o.weight);
            }
            for a in 0..n_sub {
                if o.subset_hits >> a & 1 == 1 {
                    tally.subset_counts[a] += 1;
                    for b in a + 1..n_sub {
                        if o.subset_hits >> b & 1 == 1 {
                            tally.pair_counts[a * n_sub + b] += 1;
                        }
                    }
                }
            }
        }
        tally
    });
    let mut subset_counts = vec![0; n_sub];
    let mut pair_counts = vec![0; n_sub * n_sub];
    let mut times = Vec::new();
    let mut weights = Vec::new();
    let mut steps = 0;
    for b in &blocks {
        steps += b.steps;
        times.extend_from_slice(&b.times);
        weights.extend_from_slice(&b.weights);
        subset_counts.iter_mut().zip(&b.subset_counts).for_each(|(x, y)| *x += y);
        pair_counts.iter_mut().zip(&b.pair_counts).for_each(|(x, y)| *x += y);
    }
    Tally {
        coarse: Moments::combine(blocks.iter().map(|b| &b.coarse)),
        fine: Moments::combine(blocks.iter().map(|b| &b.fine)),
        diff: Moments::combine(blocks.iter().map(|b| &b.diff)),
        steps,
        times,
        weights,
        subset_counts,
        pair_counts,
    }
}

fn estimate(m: &Moments, n_rep: u64, seed: u64, weighted: bool) -> McEstimate {
    if weighted {
        let mut e = McEstimate::from_moments(m, n_rep, seed);
        e.ci95[0] = e.ci95[0].max(0.0);
        e
    } else {
        McEstimate::probability(m, n_rep, seed)
    }
}

fn check_reps(n_rep: u64) -> Result<()> {
    if n_rep < 2 {
        return Err(BrmError::InvalidInput("n_rep must be at least 2".into()));
    }
    Ok(())
}

fn simulate_window(spec: &RiskSpec, end: f64, opts: &SimOptions, n_rep: u64, seed: u64) -> Result<SimResult> {
    check_reps(n_rep)?;
    if opts.emit_times && opts.tilt.is_some() {
        return Err(BrmError::Unsupported(
            "hit times are only emitted for plain Monte Carlo".into(),
        ));
    }
    let kernel = Kernel::new(spec, spec.s_start, end, opts.monitor, opts.tilt.as_deref(), Mode::Count(spec.k))?;
    let tally = run_kernel(&kernel, n_rep, seed, &[domain::SIMULATE], opts.emit_times);
    let weighted = opts.tilt.is_some();
    let coarse = estimate(&tally.coarse, n_rep, seed, weighted);
    let fine = estimate(&tally.fine, n_rep, seed, weighted);
    let diff_se = tally.diff.stderr();
    let gap = (fine.value - coarse.value).abs();
    let grid = match opts.monitor {
        Monitor::Uniform { n_steps } => Some(PathGrid::uniform(spec.s_start, end, n_steps)?),
        Monitor::Adaptive { .. } => None,
    };
    Ok(SimResult {
        psi_hat: coarse,
        n_paths: n_rep,
        monitor: opts.monitor,
        grid,
        t_start: spec.s_start,
        t_end: end,
        mean_steps: tally.steps as f64 / n_rep as f64,
        refinement_check: Refinement {
            coarse,
            fine,
            difference_stderr: diff_se,
            grid_bias_warning: gap > 3.0 * coarse.joint_stderr(&fine),
        },
        tilt: opts.tilt.clone(),
        hitting_times: opts.emit_times.then_some(tally.times),
        tail_log_rate: None,
    })
}

/// `psi_k(S, T, a u)` on a finite horizon.
pub fn simulate_psi(spec: &RiskSpec, opts: &SimOptions, n_rep: u64, seed: u64) -> Result<SimResult> {
    let t = match spec.horizon {
        Horizon::Finite(t) => t,
        Horizon::Infinite => {
            return Err(BrmError::Unsupported(
                "infinite horizon: use simulate_psi_infinite".into(),
            ))
        }
    };
    simulate_window(spec, t, opts, n_rep, seed)
}

/// `psi_k(S, inf, a u)`, simulated on `[S, t_cap]`.
pub fn simulate_psi_infinite(spec: &RiskSpec, t_cap: f64, opts: &SimOptions, n_rep: u64, seed: u64) -> Result<SimResult> {
    spec.check_infinite_conditions()?;
    let rates = k_subsets(spec.dim(), spec.k)
        .iter()
        .map(|s| rate_function(spec, s))
        .collect::<Result<Vec<_>>>()?;
    let scale = rates.iter().map(|r| r.t_hat).fold(0.0, f64::max) * spec.u;
    if !(t_cap >= 4.0 * scale) || !(t_cap > spec.s_start) {
        return Err(BrmError::Precondition(format!(
            "t_cap = {t_cap} must be at least 4 u max t_hat = {} and exceed S",
            4.0 * scale
        )));
    }
    let mut res = simulate_window(spec, t_cap, opts, n_rep, seed)?;
    let tail = rates
        .iter()
        .map(|r| 0.5 * spec.u * r.eval(t_cap / spec.u))
        .fold(f64::INFINITY, f64::min);
    res.tail_log_rate = Some(tail);
    Ok(res)
}

/// Per-subset and pairwise event probabilities on the same paths, for the
/// inclusion-exclusion bracket.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetEvents {
    /// `P(exists t: all of I fail at t)`.
    #[serde(serialize_with = "as_entries")]
    pub per_subset: BTreeMap<IndexSet, McEstimate>,
    /// `P(both events occur, at possibly different times)`.
    #[serde(serialize_with = "as_entries")]
    pub pairwise: BTreeMap<(IndexSet, IndexSet), McEstimate>,
    /// `P(at least one subset event)`, i.e. `psi_k` on the same monitor.
    pub psi: McEstimate,
}

/// Maps with non-string keys as a list of `[key, value]` pairs.
fn as_entries<K: Serialize, V: Serialize, S: serde::Serializer>(
    m: &BTreeMap<K, V>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(m.iter())
}

pub fn simulate_subset_events(spec: &RiskSpec, monitor: Monitor, n_rep: u64, seed: u64) -> Result<SubsetEvents> {
    check_reps(n_rep)?;
    let t = spec.finite_t()?;
    let subsets = k_subsets(spec.dim(), spec.k);
    if subsets.len() > 64 {
        return Err(BrmError::Unsupported(format!(
            "subset events are tracked for at most 64 subsets, got {}",
            subsets.len()
        )));
    }
    let lists = subsets.iter().map(|s| s.as_slice().to_vec()).collect();
    let kernel = Kernel::new(spec, spec.s_start, t, monitor, None, Mode::Subsets(lists))?;
    let tally = run_kernel(&kernel, n_rep, seed, &[domain::SIMULATE, 1], false);
    let from_count = |c: u64| {
        let m = Moments {
            n: n_rep,
            sum: c as f64,
            sum_sq: c as f64,
        };
        McEstimate::probability(&m, n_rep, seed)
    };
    let n = subsets.len();
    let per_subset = subsets
        .iter()
        .zip(&tally.subset_counts)
        .map(|(s, &c)| (s.clone(), from_count(c)))
        .collect();
    let mut pairwise = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            pairwise.insert(
                (subsets[a].clone(), subsets[b].clone()),
                from_count(tally.pair_counts[a * n + b]),
            );
        }
    }
    Ok(SubsetEvents {
        per_subset,
        pairwise,
        psi: McEstimate::probability(&tally.coarse, n_rep, seed),
    })
}

/// Extra drift that sends paths toward the most likely failure point: the
/// solution of the program for the dominant `k`-subset at the failure time,
/// divided by that time, extended to the other components by the conditional
/// mean.
pub fn default_tilt(spec: &RiskSpec) -> Result<Vec<f64>> {
    let d = spec.dim();
    let mut best: Option<(f64, IndexSet, Vec<f64>, f64)> = None;
    for s in k_subsets(d, spec.k) {
        let r = spec.restrict(&s);
        let time = match spec.horizon {
            Horizon::Finite(t) => t,
            Horizon::Infinite => rate_function(spec, &s)?.t_hat * spec.u,
        };
        let b: Vec<f64> = r.a.iter().zip(&r.c).map(|(a, c)| a * spec.u + c * time).collect();
        if b.iter().all(|&x| x <= 0.0) {
            return Ok(vec![0.0; d]);
        }
        let sol = solve_pi_sigma(&r.model, &b)?;
        let score = sol.value / time;
        if best.as_ref().is_none_or(|(v, ..)| score < *v) {
            best = Some((score, s, sol.a_tilde, time));
        }
    }
    let (_, set, x, time) = best.expect("at least one subset");
    let rest = set.complement(d);
    let mut theta = vec![0.0; d];
    for (i, v) in set.iter().zip(&x) {
        theta[i] = v / time;
    }
    if !rest.is_empty() {
        let (mean, _) = spec.model.conditional(&set, &x, &rest);
        for (j, v) in rest.iter().zip(mean) {
            theta[j] = v / time;
        }
    }
    Ok(theta)
}

/// Conditional failure times, rescaled to `u^2 (T - tau)`.
#[derive(Debug, Clone, Serialize)]
pub struct FailureTimes {
    pub samples: Vec<f64>,
    /// Likelihood-ratio weights (all 1 for plain Monte Carlo).
    pub weights: Vec<f64>,
    /// `(sum w)^2 / sum w^2`.
    pub effective_size: f64,
    /// Rate of the exponential limit, `a~^T Sigma^{-1} a~ / (2 T^2)`.
    pub limit_rate: f64,
    /// `P(tau in [S, T])`.
    pub hit_probability: McEstimate,
    pub n_paths: u64,
}

impl FailureTimes {
    /// `n` draws from the weighted sample, with replacement and probability
    /// proportional to weight. Unweighted samples are returned unchanged.
    pub fn resample(&self, n: usize, seed: u64) -> Vec<f64> {
        if self.weights.iter().all(|&w| w == 1.0) {
            return self.samples.clone();
        }
        let mut cum = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        let mut rng = block_rng(seed, &[domain::FAILURE_TIME, 1], 0);
        (0..n)
            .map(|_| {
                let x = rng.random::<f64>() * acc;
                let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
                self.samples[i]
            })
            .collect()
    }
}

/// First time at which all components have failed, from paths monitored
/// from time 0; keeps the paths with `tau in [S, T]`.
pub fn sample_failure_time(spec: &RiskSpec, opts: &SimOptions, n_rep: u64, seed: u64) -> Result<FailureTimes> {
    check_reps(n_rep)?;
    let t = spec.finite_t()?;
    if spec.k != spec.dim() {
        return Err(BrmError::Precondition(format!(
            "failure times need k = d, got k = {} and d = {}",
            spec.k,
            spec.dim()
        )));
    }
    if let Monitor::Uniform { n_steps } = opts.monitor {
        let need = (64.0 * spec.u * spec.u).ceil() as usize;
        if n_steps < need {
            return Err(BrmError::Precondition(format!(
                "uniform monitoring of failure times needs n_steps >= 64 u^2 = {need}, got {n_steps}"
            )));
        }
    }
    let qp = solve_pi_sigma(&spec.model, &spec.a)?;
    let limit_rate = qp.value / (2.0 * t * t);

    let kernel = Kernel::new(spec, 0.0, t, opts.monitor, opts.tilt.as_deref(), Mode::Count(spec.k))?;
    let tally = run_kernel(&kernel, n_rep, seed, &[domain::FAILURE_TIME], true);
    let u2 = spec.u * spec.u;
    let mut samples = Vec::new();
    let mut weights = Vec::new();
    let mut inside = Moments::default();
    for (tau, w) in tally.times.iter().zip(&tally.weights) {
        if *tau >= spec.s_start {
            samples.push(u2 * (t - tau));
            weights.push(*w);
            inside.sum += w;
            inside.sum_sq += w * w;
        }
    }
    inside.n = n_rep;
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    let effective_size = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
    if samples.len() < MIN_FAILURE_SAMPLES || effective_size < MIN_FAILURE_SAMPLES as f64 {
        return Err(BrmError::InsufficientHits {
            hits: samples.len().min(effective_size as usize),
            needed: MIN_FAILURE_SAMPLES,
        });
    }
    Ok(FailureTimes {
        samples,
        weights,
        effective_size,
        limit_rate,
        hit_probability: estimate(&inside, n_rep, seed, opts.tilt.is_some()),
        n_paths: n_rep,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub n: usize,
    /// `sup |F_n - F|`.
    pub statistic: f64,
    /// `sup (F_n - F)`.
    pub d_plus: f64,
    /// `sup (F - F_n)`.
    pub d_minus: f64,
    pub critical_value: f64,
    pub pass: bool,
}

/// Kolmogorov-Smirnov distance of a sample from `Exp(rate)` with the
/// asymptotic 1% critical value.
pub fn ks_against_exponential(samples: &[f64], rate: f64) -> Result<KsResult> {
    if samples.len() < MIN_FAILURE_SAMPLES {
        return Err(BrmError::Precondition(format!(
            "need at least {MIN_FAILURE_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if !(rate > 0.0) || samples.iter().any(|x| !x.is_finite()) {
        return Err(BrmError::InvalidInput("rate must be positive and samples finite".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let (mut d_plus, mut d_minus) = (0.0f64, 0.0f64);
    for (i, x) in xs.iter().enumerate() {
        let f = -(-rate * x.max(0.0)).exp_m1();
        d_plus = d_plus.max((i + 1) as f64 / nf - f);
        d_minus = d_minus.max(f - i as f64 / nf);
    }
    let statistic = d_plus.max(d_minus);
    let sn = nf.sqrt();
    let critical_value = 1.6276 / (sn + 0.12 + 0.11 / sn);
    Ok(KsResult {
        n,
        statistic,
        d_plus,
        d_minus,
        critical_value,
        pass: statistic < critical_value,
    })
}
