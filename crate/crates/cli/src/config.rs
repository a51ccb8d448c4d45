//! Experiment configuration: one TOML file per run, diffable and seedable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sa_core::StepSizeSchedule;

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    SgdPassive,
    Cd,
    Sem,
    Active,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Algorithm::SgdPassive => "sgd_passive",
            Algorithm::Cd => "cd",
            Algorithm::Sem => "sem",
            Algorithm::Active => "active",
        };
        write!(f, "{name}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub max_iters: u64,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_record_interval")]
    pub record_interval: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Halt once |g(θ)ᵀd̄(θ)| < tolerance at a checkpoint.
    #[serde(default = "default_true")]
    pub stop_on_convergence: bool,
    #[serde(default)]
    pub full_record: bool,
    #[serde(default = "default_monitor_radius")]
    pub monitor_radius: f64,
    pub out: PathBuf,
    /// Diagnostic: negate the search direction (turns descent into ascent).
    #[serde(default)]
    pub flip_direction: bool,
}

fn default_m() -> u32 {
    1
}
fn default_record_interval() -> u64 {
    100
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_true() -> bool {
    true
}
fn default_monitor_radius() -> f64 {
    1e10
}
fn default_data_seed() -> u64 {
    0xDA7A
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Registry key: quadratic, logistic, boltzmann4, mixture2x6, env3x2,
    /// custom_gibbs, custom_active.
    pub key: String,
    /// Observations to generate for cd/sem datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_data: Option<usize>,
    /// Seed of the dataset generator; fixed by default so seed sweeps share
    /// one dataset.
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Generating parameters for datasets (defaults per key).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<Vec<f64>>,
    /// Initial parameter point (defaults per algorithm).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    /// Custom Gibbs model (key = custom_gibbs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsSection>,
    /// Custom mixture dimensions (key = custom_mixture).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSection>,
    /// Custom environment tables (key = custom_active).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_env: Option<ActiveEnvSection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSection {
    /// Hidden components K.
    pub k: usize,
    /// Visible units d.
    pub d: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    pub units: usize,
    /// Feature map registry key: "pairwise" or "singletons".
    pub feature_map: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveEnvSection {
    pub initial_probs: Vec<f64>,
    /// transitions[s][a][s']
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// costs[s][a][s']
    pub costs: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// "constant", "darken", or "power".
    pub family: String,
    pub gamma0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl ScheduleSection {
    pub fn to_schedule(&self) -> Result<StepSizeSchedule, HarnessError> {
        match self.family.as_str() {
            "constant" => Ok(StepSizeSchedule::constant(self.gamma0)?),
            "darken" => {
                let tau = self
                    .tau
                    .ok_or_else(|| HarnessError::Config("darken schedule requires `tau`".into()))?;
                Ok(StepSizeSchedule::darken(self.gamma0, tau)?)
            }
            "power" => {
                let p = self
                    .p
                    .ok_or_else(|| HarnessError::Config("power schedule requires `p`".into()))?;
                Ok(StepSizeSchedule::power_decay(self.gamma0, p)?)
            }
            other => Err(HarnessError::Config(format!(
                "unknown schedule family `{other}` (expected constant, darken, or power)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdSection {
    /// "exact", "cd_k", or "persistent".
    #[serde(default = "default_sampler_mode")]
    pub sampler_mode: CdSamplerModeName,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default)]
    pub burn_in: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdSamplerModeName {
    Exact,
    CdK,
    Persistent,
}

fn default_sampler_mode() -> CdSamplerModeName {
    CdSamplerModeName::Exact
}
fn default_k() -> u32 {
    1
}

impl Default for CdSection {
    fn default() -> Self {
        Self {
            sampler_mode: CdSamplerModeName::Exact,
            k: 1,
            burn_in: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSection {
    #[serde(default)]
    pub closed_loop: bool,
    #[serde(default)]
    pub baseline: f64,
    /// Weight of the quadratic adaptive-critic term added to the cost.
    #[serde(default)]
    pub critic_weight: f64,
}

impl Default for ActiveSection {
    fn default() -> Self {
        Self {
            closed_loop: false,
            baseline: 0.0,
            critic_weight: 0.0,
        }
    }
}

/// The whole experiment file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cd: Option<CdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<ActiveSection>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Toml(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Toml(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.experiment.max_iters == 0 {
            return Err(HarnessError::Config("max_iters must be >= 1".into()));
        }
        if self.experiment.m == 0 {
            return Err(HarnessError::Config("m must be >= 1".into()));
        }
        if self.experiment.record_interval == 0 {
            return Err(HarnessError::Config("record_interval must be >= 1".into()));
        }
        if !(self.experiment.tolerance > 0.0 && self.experiment.tolerance.is_finite()) {
            return Err(HarnessError::Config("tolerance must be positive".into()));
        }
        if self.experiment.out.as_os_str().is_empty() {
            return Err(HarnessError::Config("out path must be nonempty".into()));
        }
        self.schedule.to_schedule().map(|_| ())?;
        if let Some(cd) = &self.cd {
            if cd.k == 0 {
                return Err(HarnessError::Config("cd.k must be >= 1".into()));
            }
        }
        Ok(())
    }
}
