//! Run configuration, read from JSON. Unknown keys are rejected and every
//! value is checked before any computation starts.

use std::path::{Path, PathBuf};

use laplace_core::newton::{BStrategy, NewtonSettings};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_strategy() -> Strategy {
    Strategy::B3
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    B1,
    B2,
    B3,
}

impl From<Strategy> for BStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::B1 => BStrategy::B1,
            Strategy::B2 => BStrategy::B2,
            Strategy::B3 => BStrategy::B3,
        }
    }
}

/// Model selector. Hyperparameter values are the point used by `fit` and
/// `gradcheck` and the initial point for `sample`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    GaussianGp {
        data: PathBuf,
        amplitude: f64,
        lengthscales: Vec<f64>,
        sigma: f64,
        #[serde(default = "default_nugget")]
        nugget: f64,
    },
    PoissonGp {
        data: PathBuf,
        amplitude: f64,
        lengthscales: Vec<f64>,
        #[serde(default = "default_nugget")]
        nugget: f64,
    },
    StudentTGp {
        data: PathBuf,
        amplitude: f64,
        lengthscales: Vec<f64>,
        sigma: f64,
        nu: f64,
        #[serde(default = "default_nugget")]
        nugget: f64,
    },
    Pk {
        data: PathBuf,
        #[serde(default = "default_dose")]
        dose: f64,
        tau: [f64; 2],
        sigma: f64,
        k1pop: f64,
        k2pop: f64,
    },
}

fn default_nugget() -> f64 {
    1e-8
}

fn default_dose() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn data(&self) -> &Path {
        match self {
            ModelConfig::GaussianGp { data, .. }
            | ModelConfig::PoissonGp { data, .. }
            | ModelConfig::StudentTGp { data, .. }
            | ModelConfig::Pk { data, .. } => data,
        }
    }

    fn data_mut(&mut self) -> &mut PathBuf {
        match self {
            ModelConfig::GaussianGp { data, .. }
            | ModelConfig::PoissonGp { data, .. }
            | ModelConfig::StudentTGp { data, .. }
            | ModelConfig::Pk { data, .. } => data,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub linesearch: bool,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        let d = NewtonSettings::default();
        Self {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            linesearch: d.linesearch,
            max_halvings: d.max_halvings,
        }
    }
}

impl NewtonConfig {
    pub fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            linesearch: self.linesearch,
            max_halvings: self.max_halvings,
            theta0: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub seed: u64,
    #[serde(default = "default_target")]
    pub target_accept: f64,
    /// Draw latent values alongside each marginal-HMC draw.
    #[serde(default = "yes")]
    pub latent: bool,
}

fn default_target() -> f64 {
    0.8
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub relative_step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            relative_step: 1e-5,
            tolerance: 1e-3,
        }
    }
}

/// Scaling runs on synthetic Poisson-GP data. `dims` are input dimensions
/// of an ARD kernel, so p = 1 + d kernel hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub dims: Vec<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

/// Ground truth for `simulate`. The defaults for τ and σ are fixture
/// choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub patients: usize,
    pub tau: [f64; 2],
    pub sigma: f64,
    pub k1pop: f64,
    pub k2pop: f64,
    pub dose: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            patients: 10,
            tau: [0.2, 0.2],
            sigma: 0.1,
            k1pop: 2.0,
            k2pop: 1.0,
            dose: 1.0,
            seed: 1,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses JSON text; relative data paths stay as written.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves the data path against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let data = cfg.model.data_mut();
        if data.is_relative() {
            *data = base.join(&*data);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match &self.model {
            ModelConfig::GaussianGp {
                amplitude,
                lengthscales,
                sigma,
                nugget,
                ..
            } => {
                positive("amplitude", *amplitude)?;
                lengthscales.iter().try_for_each(|l| positive("lengthscale", *l))?;
                positive("sigma", *sigma)?;
                non_negative("nugget", *nugget)?;
                non_empty(lengthscales)?;
            }
            ModelConfig::PoissonGp {
                amplitude,
                lengthscales,
                nugget,
                ..
            } => {
                positive("amplitude", *amplitude)?;
                lengthscales.iter().try_for_each(|l| positive("lengthscale", *l))?;
                non_negative("nugget", *nugget)?;
                non_empty(lengthscales)?;
            }
            ModelConfig::StudentTGp {
                amplitude,
                lengthscales,
                sigma,
                nu,
                nugget,
                ..
            } => {
                positive("amplitude", *amplitude)?;
                lengthscales.iter().try_for_each(|l| positive("lengthscale", *l))?;
                positive("sigma", *sigma)?;
                positive("nu", *nu)?;
                non_negative("nugget", *nugget)?;
                non_empty(lengthscales)?;
            }
            ModelConfig::Pk {
                dose,
                tau,
                sigma,
                k1pop,
                k2pop,
                ..
            } => {
                positive("dose", *dose)?;
                positive("tau[0]", tau[0])?;
                positive("tau[1]", tau[1])?;
                positive("sigma", *sigma)?;
                positive("k1pop", *k1pop)?;
                positive("k2pop", *k2pop)?;
            }
        }
        self.newton
            .settings()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(s) = &self.sampler {
            positive("sampler.step_size", s.step_size)?;
            if s.leapfrog_steps == 0 {
                return Err(CliError::Config("sampler.leapfrog_steps must be at least 1".into()));
            }
            if s.chains == 0 || s.iterations == 0 {
                return Err(CliError::Config(
                    "sampler needs at least one chain and one iteration".into(),
                ));
            }
            if !(s.target_accept > 0.0 && s.target_accept < 1.0) {
                return Err(CliError::Config("sampler.target_accept must lie in (0, 1)".into()));
            }
        }
        if let Some(g) = &self.gradcheck {
            positive("gradcheck.relative_step", g.relative_step)?;
            positive("gradcheck.tolerance", g.tolerance)?;
        }
        if let Some(b) = &self.bench {
            if b.sizes.is_empty() || b.dims.is_empty() || b.repetitions == 0 {
                return Err(CliError::Config("bench needs sizes, dims and repetitions".into()));
            }
            if b.sizes.contains(&0) || b.dims.contains(&0) {
                return Err(CliError::Config("bench sizes and dims must be positive".into()));
            }
        }
        if let Some(s) = &self.simulate {
            positive("simulate.sigma", s.sigma)?;
            positive("simulate.tau[0]", s.tau[0])?;
            positive("simulate.tau[1]", s.tau[1])?;
            positive("simulate.k1pop", s.k1pop)?;
            positive("simulate.k2pop", s.k2pop)?;
            positive("simulate.dose", s.dose)?;
            if s.patients == 0 {
                return Err(CliError::Config("simulate.patients must be positive".into()));
            }
        }
        Ok(())
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be non-negative, got {v}")))
    }
}

fn non_empty(ls: &[f64]) -> Result<(), CliError> {
    if ls.is_empty() {
        Err(CliError::Config("at least one lengthscale is required".into()))
    } else {
        Ok(())
    }
}
