//! Suite configuration: a TOML file with a seed, an output directory and a
//! list of `[[experiment]]` tables.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//!
//! [[experiment]]
//! name = "lln"
//! [experiment.params]
//! b = 5.0
//! rho_factor = 2.0
//! l = [100]
//! draws = 10000
//! allowance = { mode = "asymptotic" }
//! ```
//!
//! Every physical parameter is explicit; parameter tables reject unknown keys.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::limit::SchemeConstants;
use crate::model::{ModelParams, WellPartition};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default, rename = "experiment", skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<ExperimentConfig>,
}

/// One entry of the suite. `name` selects the experiment, `params` is parsed
/// against that experiment's parameter type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// output subdirectory; defaults to `name`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// overrides the seed derived from the suite seed and the label
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: toml::Table,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ZrpError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ZrpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ZrpError::Config(e.to_string()))
    }

    /// Parse every experiment; fails on the first unknown name or bad table.
    pub fn experiments(&self) -> Result<Vec<Experiment>> {
        let exps: Vec<Experiment> = self.experiments.iter().map(Experiment::parse).collect::<Result<_>>()?;
        let mut labels: Vec<&str> = self.experiments.iter().map(ExperimentConfig::label).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(ZrpError::Config(format!("duplicate experiment label {:?}", w[0])));
        }
        Ok(exps)
    }
}

impl ExperimentConfig {
    pub fn new<P: Serialize>(name: &str, params: &P) -> Result<Self> {
        let params = toml::Table::try_from(params).map_err(|e| ZrpError::Config(e.to_string()))?;
        Ok(Self { name: name.into(), label: None, seed: None, params })
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn seed(&self, suite_seed: u64) -> u64 {
        self.seed.unwrap_or_else(|| derive_seed(suite_seed, self.label()))
    }
}

/// How the well scales are chosen at each `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scales {
    Asymptotic,
    Explicit {
        alpha: f64,
        beta: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi: Option<usize>,
    },
    /// `alpha = alpha_fraction * (N - rho_c L)`
    Relative {
        alpha_fraction: f64,
        beta: usize,
    },
}

impl Scales {
    pub fn partition(&self, mp: &ModelParams) -> Result<WellPartition> {
        match *self {
            Scales::Asymptotic => Ok(WellPartition::asymptotic(mp)),
            Scales::Explicit { alpha, beta, phi } => WellPartition::explicit(alpha, beta, phi.unwrap_or(beta)),
            Scales::Relative { alpha_fraction, beta } => {
                WellPartition::explicit(alpha_fraction * mp.n_tilde.max(0.0), beta, beta)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCase {
    pub l: usize,
    pub n: usize,
    pub b: f64,
    pub alpha: f64,
    pub beta: usize,
}

impl OracleCase {
    pub fn model(&self) -> Result<(ModelParams, WellPartition)> {
        Ok((ModelParams::new(self.l, self.n, self.b)?, WellPartition::explicit(self.alpha, self.beta, self.beta)?))
    }
}

/// Closed forms against linear solves and quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesParams {
    #[serde(default)]
    pub ring_l: Vec<usize>,
    pub bd_b: f64,
    #[serde(default)]
    pub bd_y: Vec<usize>,
    #[serde(default)]
    pub i_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    pub cases: Vec<OracleCase>,
    pub sampler_draws: usize,
    pub kmc_replicas: usize,
    pub relax_multiple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalLimitParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: Vec<usize>,
    pub draws: usize,
    /// only `alpha` is used, as the `alpha_L / L` allowance
    pub allowance: Scales,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactRatesParams {
    pub l: usize,
    pub n: usize,
    pub b: f64,
    pub alpha: f64,
    pub beta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpLawParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: usize,
    pub scales: Scales,
    pub trajectories: usize,
    pub jumps_per_trajectory: usize,
    pub t_max: f64,
    /// fewer pooled jumps make the run inconclusive
    pub min_jumps: usize,
    pub tv_tolerance: f64,
    pub sign_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactRatesParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitTimeParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: Vec<usize>,
    pub scales: Scales,
    pub trajectories: usize,
    pub jumps_per_trajectory: usize,
    pub t_max: f64,
    /// max / min of `(mean dwell / theta_L) log L`
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaFractionParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: Vec<usize>,
    pub scales: Scales,
    pub trajectories: usize,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyParamsConfig {
    pub b: f64,
    pub rho: f64,
    pub eps: f64,
    pub t: f64,
    pub paths: usize,
    pub k: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingParams {
    pub b: f64,
    pub rho_factor: f64,
    pub l: usize,
    pub scales: Scales,
    pub trajectories: usize,
    pub t_max: f64,
    pub grid: usize,
    pub min_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationParams {
    pub b: f64,
    pub rho: f64,
    pub l: Vec<usize>,
    pub scheme: SchemeConstants,
}

/// A parsed experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Identities(IdentitiesParams),
    Oracle(OracleParams),
    LocalLimit(LocalLimitParams),
    Lln(LlnParams),
    JumpLaw(JumpLawParams),
    ExitTime(ExitTimeParams),
    DeltaFraction(DeltaFractionParams),
    Levy(LevyParamsConfig),
    Coupling(CouplingParams),
    Regularization(RegularizationParams),
}

pub const EXPERIMENT_NAMES: [&str; 10] = [
    "identities",
    "oracle",
    "local_limit",
    "lln",
    "jump_law",
    "exit_time",
    "delta_fraction",
    "levy",
    "coupling",
    "regularization",
];

fn params<P: DeserializeOwned>(cfg: &ExperimentConfig) -> Result<P> {
    toml::Value::Table(cfg.params.clone())
        .try_into()
        .map_err(|e| ZrpError::Config(format!("experiment {:?}: {e}", cfg.label())))
}

fn non_empty<T>(what: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(ZrpError::Config(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

impl Experiment {
    pub fn parse(cfg: &ExperimentConfig) -> Result<Self> {
        let e = match cfg.name.as_str() {
            "identities" => Self::Identities(params(cfg)?),
            "oracle" => Self::Oracle(params(cfg)?),
            "local_limit" => Self::LocalLimit(params(cfg)?),
            "lln" => Self::Lln(params(cfg)?),
            "jump_law" => Self::JumpLaw(params(cfg)?),
            "exit_time" => Self::ExitTime(params(cfg)?),
            "delta_fraction" => Self::DeltaFraction(params(cfg)?),
            "levy" => Self::Levy(params(cfg)?),
            "coupling" => Self::Coupling(params(cfg)?),
            "regularization" => Self::Regularization(params(cfg)?),
            other => {
                return Err(ZrpError::Config(format!(
                    "unknown experiment {other:?}; expected one of {}",
                    EXPERIMENT_NAMES.join(", ")
                )))
            }
        };
        e.validate()?;
        Ok(e)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Identities(_) => "identities",
            Self::Oracle(_) => "oracle",
            Self::LocalLimit(_) => "local_limit",
            Self::Lln(_) => "lln",
            Self::JumpLaw(_) => "jump_law",
            Self::ExitTime(_) => "exit_time",
            Self::DeltaFraction(_) => "delta_fraction",
            Self::Levy(_) => "levy",
            Self::Coupling(_) => "coupling",
            Self::Regularization(_) => "regularization",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Identities(p) if p.ring_l.is_empty() && p.bd_y.is_empty() && p.i_b.is_empty() => {
                Err(ZrpError::Config("identities has nothing to check".into()))
            }
            Self::Oracle(p) => non_empty("cases", &p.cases),
            Self::LocalLimit(p) => {
                if p.l.len() < 2 {
                    return Err(ZrpError::Config("local_limit needs at least two sizes".into()));
                }
                Ok(())
            }
            Self::Lln(p) => {
                non_empty("l", &p.l)?;
                if p.draws < 2 {
                    return Err(ZrpError::Config("lln needs at least two draws".into()));
                }
                Ok(())
            }
            Self::JumpLaw(p) if p.trajectories == 0 => Err(ZrpError::Config("jump_law needs trajectories".into())),
            Self::ExitTime(p) => non_empty("l", &p.l),
            Self::DeltaFraction(p) => non_empty("l", &p.l),
            Self::Levy(p) if p.paths < 2 => Err(ZrpError::Config("levy needs at least two paths".into())),
            Self::Coupling(p) if p.grid < 2 => Err(ZrpError::Config("coupling needs at least two grid points".into())),
            Self::Regularization(p) => non_empty("l", &p.l),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 7
output_dir = "out"

[[experiment]]
name = "lln"
label = "lln-small"
[experiment.params]
b = 5.0
rho_factor = 2.0
l = [20, 40]
draws = 100
allowance = { mode = "asymptotic" }

[[experiment]]
name = "coupling"
seed = 3
[experiment.params]
b = 4.0
rho_factor = 2.0
l = 8
scales = { mode = "explicit", alpha = 2.0, beta = 2 }
trajectories = 4
t_max = 5.0
grid = 5
min_r2 = 0.9
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = SuiteConfig::from_toml(SAMPLE).unwrap();
        let exps = c.experiments().unwrap();
        assert_eq!(exps.len(), 2);
        assert_eq!(exps[0].name(), "lln");
        assert_eq!(c.experiments[0].label(), "lln-small");
        assert_eq!(c.experiments[1].seed(7), 3);
        let back = SuiteConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.experiments().unwrap(), exps);
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        let text = "seed = 1\noutput_dir = \"o\"\n[[experiment]]\nname = \"nope\"\n";
        let err = SuiteConfig::from_toml(text).unwrap().experiments().unwrap_err();
        assert!(matches!(err, ZrpError::Config(ref m) if m.contains("nope")), "{err}");
    }

    #[test]
    fn bad_params_are_config_errors() {
        let text = "seed = 1\noutput_dir = \"o\"\n[[experiment]]\nname = \"lln\"\n[experiment.params]\nb = 5.0\n";
        assert!(matches!(SuiteConfig::from_toml(text).unwrap().experiments(), Err(ZrpError::Config(_))));
        let text = SAMPLE.replace("min_r2 = 0.9", "min_r2 = 0.9\nextra = 1");
        assert!(matches!(SuiteConfig::from_toml(&text).unwrap().experiments(), Err(ZrpError::Config(_))));
    }

    #[test]
    fn seeds_differ_by_label() {
        let c = SuiteConfig::from_toml(SAMPLE).unwrap();
        assert_ne!(c.experiments[0].seed(7), c.experiments[0].seed(8));
        let mut other = c.experiments[0].clone();
        other.label = Some("lln-other".into());
        assert_ne!(other.seed(7), c.experiments[0].seed(7));
    }

    #[test]
    fn relative_scales() {
        let mp = ModelParams::at_critical_multiple(32, 2.0, 5.0).unwrap();
        let wp = Scales::Relative { alpha_fraction: 0.5, beta: 4 }.partition(&mp).unwrap();
        assert!((wp.alpha - mp.n_tilde / 2.0).abs() < 1e-12);
        assert!(wp.is_separating(&mp));
    }
}
