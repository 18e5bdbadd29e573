mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use brm_core::asymptotics::equicorr::{dominant_pairs, example1_asymptotic, example2_pair_tail};
use brm_core::asymptotics::{
    equicorrelated_closed_forms, infinite_horizon_lograte, psi_k_asymptotic, rate_function, PickandsConfig,
};
use brm_core::bounds::{bonferroni, sandwich};
use brm_core::index::k_subsets;
use brm_core::simulator::{
    default_tilt, ks_against_exponential, sample_failure_time, simulate_psi, simulate_psi_infinite,
    simulate_subset_events, Monitor, SimOptions,
};
use brm_core::{solve_pi_sigma, BrmError, CovModel, Horizon, RiskSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use config::{AutoTilt, Format, HorizonConfig, HorizonName, JobConfig, TiltConfig};
use output::{emit, float, json_string, Table};

/// Simultaneous-failure probabilities for multivariate Brownian risk models.
#[derive(Parser)]
#[command(name = "brm", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "BRM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the quadratic program for the spec's covariance and thresholds.
    QpSolve(Common),
    /// Lower and upper bounds from the single-time probability.
    Bound {
        #[command(flatten)]
        common: Common,
        /// Also estimate the inclusion-exclusion bracket by simulation.
        #[arg(long)]
        bonferroni: bool,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Large-threshold approximation.
    Approx {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        horizon: Option<HorizonFlag>,
        #[command(flatten)]
        pickands: PickandsFlags,
    },
    /// Monte Carlo simulation of the failure probability.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long)]
        tcap: Option<f64>,
        /// Keep the hit times and write them as CSV to --times-csv.
        #[arg(long)]
        emit_times: bool,
        #[arg(long, requires = "emit_times")]
        times_csv: Option<PathBuf>,
    },
    /// Conditional failure times `u^2 (T - tau)` and a KS test against the limit law.
    FailureTime {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Simulation, bounds and approximation over a list of levels.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        pickands: PickandsFlags,
        /// Comma-separated levels.
        #[arg(long, value_delimiter = ',')]
        u_sweep: Vec<f64>,
    },
    /// The worked examples from built-in presets.
    Example(ExampleArgs),
}

#[derive(Args)]
struct Common {
    /// Job configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in spec: identity2, drifted1, ruin1, equicorr3.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    nrep: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct SimFlags {
    /// Uniform monitoring grid with this many steps (default: adaptive).
    #[arg(long)]
    steps: Option<usize>,
    /// Importance-sampling drift: `auto` or comma-separated values.
    #[arg(long)]
    tilt: Option<String>,
}

#[derive(Args)]
struct PickandsFlags {
    #[arg(long)]
    lambda0: Option<f64>,
    /// Grid steps per unit time for the Pickands integral.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HorizonFlag {
    Finite,
    Infinite,
}

#[derive(Args, Serialize)]
struct ExampleArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    id: u8,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Defaults to 1 for example 1, 2 for example 2 and d for example 3.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    u: f64,
    /// Common threshold of example 3.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Common drift of example 3.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Drifts for examples 1 and 2 (comma-separated, length d).
    #[arg(long, value_delimiter = ',')]
    c: Vec<f64>,
    /// Estimate the Pickands constant (examples 1 and 3).
    #[arg(long)]
    with_constant: bool,
    #[arg(long, default_value_t = 100_000)]
    nrep: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    output: Option<PathBuf>,
}

enum Failure {
    Validation(String, String),
    Numerical(BrmError),
    Io(std::io::Error),
}

impl From<BrmError> for Failure {
    fn from(e: BrmError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e)
        } else {
            Failure::Validation(e.kind().to_string(), e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation("InvalidInput".into(), msg.into())
}

impl Common {
    fn job(&self) -> Run<JobConfig> {
        let mut job = match (&self.config, &self.preset) {
            (Some(p), _) => JobConfig::load(p)?,
            (None, Some(name)) => JobConfig::from_spec(config::preset(name)?),
            (None, None) => return Err(invalid("one of --config and --preset is required")),
        };
        if let Some(n) = self.nrep {
            job.n_rep = n;
        }
        if let Some(s) = self.seed {
            job.seed = s;
        }
        if let Some(u) = self.u {
            job.spec.u = u;
        }
        if let Some(k) = self.k {
            job.spec.k = Some(k);
        }
        if let Some(p) = &self.output {
            job.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            job.output.format = f;
        }
        Ok(job)
    }
}

impl SimFlags {
    fn apply(&self, job: &mut JobConfig) -> Run<()> {
        if let Some(n) = self.steps {
            job.monitor = Monitor::Uniform { n_steps: n };
        }
        if let Some(t) = &self.tilt {
            job.tilt = Some(if t == "auto" {
                TiltConfig::Auto(AutoTilt::Auto)
            } else {
                TiltConfig::Drift(
                    t.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| invalid(format!("--tilt: {e}")))?,
                )
            });
        }
        Ok(())
    }
}

impl PickandsFlags {
    fn apply(&self, job: &mut JobConfig) {
        if let Some(l) = self.lambda0 {
            job.pickands.lambda0 = l;
        }
        if let Some(g) = self.grid {
            job.pickands.steps_per_unit = g;
        }
    }
}

fn sim_options(job: &JobConfig, spec: &RiskSpec) -> Run<SimOptions> {
    let mut opts = SimOptions::new(job.monitor);
    opts.emit_times = job.emit_times;
    opts.tilt = match &job.tilt {
        None => None,
        Some(TiltConfig::Auto(_)) => Some(default_tilt(spec)?),
        Some(TiltConfig::Drift(v)) => Some(v.clone()),
    };
    Ok(opts)
}

/// `8 u max_I t_hat_I`, twice the smallest cap the simulator accepts.
fn default_t_cap(spec: &RiskSpec) -> Run<f64> {
    let mut t_hat = 0.0f64;
    for s in k_subsets(spec.dim(), spec.k) {
        t_hat = t_hat.max(rate_function(spec, &s)?.t_hat);
    }
    Ok(8.0 * spec.u * t_hat)
}

/// `{"command", "config", "result"}` as JSON, or a CSV table.
fn finish(command: &str, job: &JobConfig, result: Value, table: Option<Table>) -> Run<()> {
    let text = match (job.output.format, table) {
        (Format::Csv, Some(t)) => t.render(),
        (Format::Csv, None) => return Err(invalid(format!("`{command}` has no CSV output"))),
        (Format::Json, _) => {
            let mut s = json_string(&json!({ "command": command, "config": job, "result": result }));
            s.push('\n');
            s
        }
    };
    emit(&text, job.output.path.as_deref())?;
    Ok(())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serialisable result")
}

fn qp_solve(common: &Common) -> Run<()> {
    let job = common.job()?;
    let model = job.spec.model()?;
    let sol = solve_pi_sigma(&model, &job.spec.a)?;
    finish("qp-solve", &job, to_value(&sol), None)
}

fn bound(common: &Common, with_bonferroni: bool, steps: Option<usize>) -> Run<()> {
    let mut job = common.job()?;
    job.bonferroni |= with_bonferroni;
    if let Some(n) = steps {
        job.monitor = Monitor::Uniform { n_steps: n };
    }
    let spec = job.spec.build()?;
    let b = sandwich(&spec, job.n_rep, job.seed)?;
    let mut result = json!({ "sandwich": to_value(&b) });
    if job.bonferroni {
        let ev = simulate_subset_events(&spec, job.monitor, job.n_rep, job.seed)?;
        let bracket = bonferroni(&spec, &ev.per_subset, &ev.pairwise)?;
        result["bonferroni"] = json!({ "bracket": to_value(&bracket), "events": to_value(&ev) });
    }
    let mut t = Table::new(&["lower", "lower_stderr", "upper", "upper_stderr", "k_const", "k_stderr"]);
    t.push(vec![
        float(b.lower.value),
        float(b.lower.stderr),
        float(b.upper.value),
        float(b.upper.stderr),
        float(b.k_const),
        float(b.k_stderr),
    ]);
    finish("bound", &job, result, Some(t))
}

fn approx(common: &Common, horizon: Option<HorizonFlag>, pk: &PickandsFlags) -> Run<()> {
    let mut job = common.job()?;
    pk.apply(&mut job);
    match horizon {
        Some(HorizonFlag::Infinite) => job.spec.horizon = HorizonConfig::Named(HorizonName::Infinite),
        Some(HorizonFlag::Finite) if job.spec.horizon == HorizonConfig::Named(HorizonName::Infinite) => {
            return Err(invalid("--horizon finite needs a finite horizon in the spec"))
        }
        _ => {}
    }
    let spec = job.spec.build()?;
    let est = match spec.horizon {
        Horizon::Finite(_) => psi_k_asymptotic(&spec, &job.asymptotic())?,
        Horizon::Infinite => infinite_horizon_lograte(&spec)?,
    };
    let mut t = Table::new(&["subset", "value", "log_value", "stderr"]);
    for term in &est.terms {
        t.push(vec![format!("\"{}\"", term.subset), float(term.value), float(term.log_value), float(term.stderr)]);
    }
    finish("approx", &job, to_value(&est), Some(t))
}

fn simulate(common: &Common, sim: &SimFlags, tcap: Option<f64>, emit_times: bool, times_csv: Option<&PathBuf>) -> Run<()> {
    let mut job = common.job()?;
    sim.apply(&mut job)?;
    if let Some(t) = tcap {
        job.t_cap = Some(t);
    }
    job.emit_times |= emit_times;
    let spec = job.spec.build()?;
    let opts = sim_options(&job, &spec)?;
    let r = match spec.horizon {
        Horizon::Finite(_) => simulate_psi(&spec, &opts, job.n_rep, job.seed)?,
        Horizon::Infinite => {
            let cap = match job.t_cap {
                Some(c) => c,
                None => default_t_cap(&spec)?,
            };
            job.t_cap = Some(cap);
            simulate_psi_infinite(&spec, cap, &opts, job.n_rep, job.seed)?
        }
    };
    if let (Some(path), Some(times)) = (times_csv, &r.hitting_times) {
        let mut t = Table::new(&["tau"]);
        for x in times {
            t.push(vec![float(*x)]);
        }
        emit(&t.render(), Some(path))?;
    }
    let mut t = Table::new(&["psi", "stderr", "ci_low", "ci_high", "psi_fine", "fine_stderr", "n_paths"]);
    let (e, f) = (r.psi_hat, r.refinement_check.fine);
    t.push(vec![
        float(e.value),
        float(e.stderr),
        float(e.ci95[0]),
        float(e.ci95[1]),
        float(f.value),
        float(f.stderr),
        r.n_paths.to_string(),
    ]);
    finish("simulate", &job, to_value(&r), Some(t))
}

fn failure_time(common: &Common, sim: &SimFlags) -> Run<()> {
    let mut job = common.job()?;
    sim.apply(&mut job)?;
    let spec = job.spec.build()?;
    let opts = sim_options(&job, &spec)?;
    let ft = sample_failure_time(&spec, &opts, job.n_rep, job.seed)?;
    let sample = ft.resample(ft.samples.len(), job.seed);
    let ks = ks_against_exponential(&sample, ft.limit_rate)?;
    let mut t = Table::new(&["x", "weight"]);
    for (x, w) in ft.samples.iter().zip(&ft.weights) {
        t.push(vec![float(*x), float(*w)]);
    }
    finish("failure-time", &job, json!({ "failure_times": to_value(&ft), "ks": to_value(&ks) }), Some(t))
}

fn sweep(common: &Common, sim: &SimFlags, pk: &PickandsFlags, levels: &[f64]) -> Run<()> {
    let mut job = common.job()?;
    sim.apply(&mut job)?;
    pk.apply(&mut job);
    if !levels.is_empty() {
        job.u_sweep = levels.to_vec();
    }
    if job.u_sweep.is_empty() {
        return Err(invalid("sweep needs levels (u_sweep or --u-sweep)"));
    }
    let base = job.spec.build()?;
    let mut rows = Vec::new();
    let mut t = Table::new(&["u", "psi_sim", "stderr", "lower", "upper", "asym", "ratio"]);
    for &u in &job.u_sweep {
        let spec = base.with_u(u)?;
        let opts = sim_options(&job, &spec)?;
        let s = simulate_psi(&spec, &opts, job.n_rep, job.seed)?;
        let b = sandwich(&spec, job.n_rep, job.seed)?;
        let a = psi_k_asymptotic(&spec, &job.asymptotic())?;
        let ratio = s.psi_hat.value / a.value;
        t.push(vec![
            float(u),
            float(s.psi_hat.value),
            float(s.psi_hat.stderr),
            float(b.lower.value),
            float(b.upper.value),
            float(a.value),
            float(ratio),
        ]);
        rows.push(json!({
            "u": u,
            "psi_sim": s.psi_hat.value,
            "stderr": s.psi_hat.stderr,
            "lower": b.lower.value,
            "upper": b.upper.value,
            "asym": a.value,
            "ratio": ratio,
        }));
    }
    finish("sweep", &job, Value::Array(rows), Some(t))
}

fn example(args: &ExampleArgs) -> Run<()> {
    let d = args.d;
    let drifts = |default: f64| -> Run<Vec<f64>> {
        match args.c.len() {
            0 => Ok(vec![default; d]),
            n if n == d => Ok(args.c.clone()),
            n => Err(invalid(format!("--c has {n} entries, expected d = {d}"))),
        }
    };
    let mut cfg = PickandsConfig {
        n_rep: args.nrep,
        seed: args.seed,
        ..PickandsConfig::default()
    };
    if let Some(g) = args.grid {
        cfg.steps_per_unit = g;
    }
    let result = match args.id {
        1 => {
            let c = drifts(0.0)?;
            let a: Vec<f64> = (0..d).map(|i| 1.0 + 0.5 * i as f64).collect();
            let closed = example1_asymptotic(&a, &c, args.u)?;
            let mut out = json!({ "a": a, "c": c, "u": args.u, "closed_form": closed });
            if args.with_constant {
                let spec = RiskSpec::finite(CovModel::identity(d), a, c, args.u, args.k.unwrap_or(1), 1.0)?;
                let est = psi_k_asymptotic(&spec, &brm_core::asymptotics::AsymptoticConfig { pickands: cfg, cond_n_rep: args.nrep })?;
                out["asymptotic"] = to_value(&est);
            }
            out
        }
        2 => {
            let c = drifts(0.0)?;
            let model = CovModel::equicorrelated(d, args.rho)?;
            let pairs = dominant_pairs(&model, &c);
            let terms: Vec<Value> = pairs
                .iter()
                .map(|&(i, j)| {
                    json!({
                        "pair": [i + 1, j + 1],
                        "tail": example2_pair_tail(args.rho, c[i], c[j], args.u),
                    })
                })
                .collect();
            json!({ "rho": args.rho, "c": c, "u": args.u, "dominant_pairs": terms })
        }
        _ => {
            let k = args.k.unwrap_or(d);
            let r = equicorrelated_closed_forms(d, args.rho, args.alpha, args.gamma, k, args.u, args.with_constant.then_some(&cfg))?;
            to_value(&r)
        }
    };
    let doc = json!({ "command": "example", "config": to_value(args), "result": result });
    let mut s = json_string(&doc);
    s.push('\n');
    emit(&s, args.output.as_deref())?;
    Ok(())
}

fn run(cli: Cli) -> Run<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::QpSolve(c) => qp_solve(c),
        Command::Bound { common, bonferroni, steps } => bound(common, *bonferroni, *steps),
        Command::Approx { common, horizon, pickands } => approx(common, *horizon, pickands),
        Command::Simulate {
            common,
            sim,
            tcap,
            emit_times,
            times_csv,
        } => simulate(common, sim, *tcap, *emit_times, times_csv.as_ref()),
        Command::FailureTime { common, sim } => failure_time(common, sim),
        Command::Sweep {
            common,
            sim,
            pickands,
            u_sweep,
        } => sweep(common, sim, pickands, u_sweep),
        Command::Example(args) => example(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (code, kind, message) = match run(cli) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Validation(kind, msg)) => (2u8, kind, msg),
        Err(Failure::Numerical(e)) => (3, e.kind().to_string(), e.to_string()),
        Err(Failure::Io(e)) => (2, "Io".to_string(), e.to_string()),
    };
    let err = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{}", json_string(&err));
    ExitCode::from(code)
}
