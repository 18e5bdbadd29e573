//! Job configuration: the JSON schema read by every subcommand.

use std::path::{Path, PathBuf};

use brm_core::asymptotics::{AsymptoticConfig, PickandsConfig};
use brm_core::simulator::Monitor;
use brm_core::{BrmError, CovModel, Horizon, RiskSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    /// Covariance matrix, row by row. Exactly one of `sigma` and `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    /// Mixing matrix with `Sigma = Gamma Gamma^T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
    pub a: Vec<f64>,
    /// Drifts; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub u: f64,
    /// Defaults to the dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub s_start: f64,
    #[serde(default)]
    pub horizon: HorizonConfig,
}

fn one() -> f64 {
    1.0
}

/// A positive number or the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HorizonConfig {
    Finite(f64),
    Named(HorizonName),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HorizonName {
    Infinite,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig::Finite(1.0)
    }
}

impl SpecConfig {
    pub fn model(&self) -> Result<CovModel, BrmError> {
        match (&self.sigma, &self.gamma) {
            (Some(s), None) => CovModel::from_rows(s),
            (None, Some(g)) => CovModel::gamma_from_rows(g),
            _ => Err(BrmError::InvalidInput(
                "spec needs exactly one of `sigma` and `gamma`".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<RiskSpec, BrmError> {
        let model = self.model()?;
        let d = model.dim();
        let horizon = match self.horizon {
            HorizonConfig::Finite(t) => Horizon::Finite(t),
            HorizonConfig::Named(HorizonName::Infinite) => Horizon::Infinite,
        };
        RiskSpec::new(
            model,
            self.a.clone(),
            self.c.clone().unwrap_or_else(|| vec![0.0; d]),
            self.u,
            self.k.unwrap_or(d),
            self.s_start,
            horizon,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "json")]
    pub format: Format,
}

fn json() -> Format {
    Format::Json
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            path: None,
            format: Format::Json,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PickandsSection {
    #[serde(default = "PickandsSection::lambda0")]
    pub lambda0: f64,
    #[serde(default = "PickandsSection::steps_per_unit")]
    pub steps_per_unit: usize,
    #[serde(default = "PickandsSection::max_doublings")]
    pub max_doublings: u32,
    /// Replications per truncation level; the job's `n_rep` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_rep: Option<u64>,
}

impl PickandsSection {
    fn lambda0() -> f64 {
        PickandsConfig::default().lambda0
    }
    fn steps_per_unit() -> usize {
        PickandsConfig::default().steps_per_unit
    }
    fn max_doublings() -> u32 {
        PickandsConfig::default().max_doublings
    }
}

impl Default for PickandsSection {
    fn default() -> Self {
        PickandsSection {
            lambda0: Self::lambda0(),
            steps_per_unit: Self::steps_per_unit(),
            max_doublings: Self::max_doublings(),
            n_rep: None,
        }
    }
}

/// `"auto"` for the built-in drift, or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TiltConfig {
    Auto(AutoTilt),
    Drift(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTilt {
    Auto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub spec: SpecConfig,
    #[serde(default = "JobConfig::n_rep")]
    pub n_rep: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "Monitor::adaptive")]
    pub monitor: Monitor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltConfig>,
    /// Simulation cap for the infinite horizon; `8 u max t_hat` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_cap: Option<f64>,
    #[serde(default)]
    pub emit_times: bool,
    #[serde(default)]
    pub pickands: PickandsSection,
    /// Replications for the touching-set factor of the tail formula.
    #[serde(default = "JobConfig::n_rep")]
    pub cond_n_rep: u64,
    /// Levels for `sweep`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u_sweep: Vec<f64>,
    /// Also report the inclusion-exclusion bracket in `bound`.
    #[serde(default)]
    pub bonferroni: bool,
    #[serde(default)]
    pub output: OutputConfig,
}

impl JobConfig {
    fn n_rep() -> u64 {
        100_000
    }

    pub fn from_spec(spec: SpecConfig) -> Self {
        serde_json::from_value(serde_json::json!({ "spec": spec })).expect("defaults are valid")
    }

    pub fn load(path: &Path) -> Result<Self, BrmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BrmError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BrmError::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn pickands(&self) -> PickandsConfig {
        PickandsConfig {
            lambda0: self.pickands.lambda0,
            steps_per_unit: self.pickands.steps_per_unit,
            max_doublings: self.pickands.max_doublings,
            n_rep: self.pickands.n_rep.unwrap_or(self.n_rep),
            seed: self.seed,
        }
    }

    pub fn asymptotic(&self) -> AsymptoticConfig {
        AsymptoticConfig {
            pickands: self.pickands(),
            cond_n_rep: self.cond_n_rep,
        }
    }
}

/// Built-in specs for quick runs.
pub fn preset(name: &str) -> Result<SpecConfig, BrmError> {
    let spec = |sigma: Vec<Vec<f64>>, a: Vec<f64>, c: Vec<f64>, u: f64, k: usize| SpecConfig {
        sigma: Some(sigma),
        gamma: None,
        a,
        c: Some(c),
        u,
        k: Some(k),
        s_start: 0.0,
        horizon: HorizonConfig::Finite(1.0),
    };
    let id2 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    Ok(match name {
        "identity2" => spec(id2, vec![1.0, 1.0], vec![0.0, 0.0], 3.0, 2),
        "drifted1" => spec(vec![vec![1.0]], vec![1.0], vec![1.0], 1.0, 1),
        "ruin1" => SpecConfig {
            horizon: HorizonConfig::Named(HorizonName::Infinite),
            ..spec(vec![vec![1.0]], vec![1.0], vec![1.0], 4.0, 1)
        },
        "equicorr3" => spec(
            vec![vec![1.0, 0.5, 0.5], vec![0.5, 1.0, 0.5], vec![0.5, 0.5, 1.0]],
            vec![1.0; 3],
            vec![0.0; 3],
            3.0,
            2,
        ),
        _ => {
            return Err(BrmError::InvalidInput(format!(
                "unknown preset `{name}` (identity2, drifted1, ruin1, equicorr3)"
            )))
        }
    })
}
