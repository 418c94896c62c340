//! Experiment configuration, read from TOML.
//!
//! Matrices are nested arrays in row-major order. Every field has a
//! default, so an empty file (or no file) gives the damped-oscillator
//! scenario with the standard sweep grids.

use std::fmt;
use std::path::{Path, PathBuf};

use collective_core::{DMatrix, DVector, FiniteStateModel, LinearGaussianModel, SimplexBelief};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("cannot read config file {}: {source}", .path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Field {
        field,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// What to do when a filter blows up during an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlowUpPolicy {
    /// Stop the whole experiment with the failing run's context.
    #[default]
    Abort,
    /// Drop the failing run, log it in the manifest and continue.
    Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub drift: Vec<Vec<f64>>,
    pub observation: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    /// σ_w².
    pub obs_noise_var: f64,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            drift: vec![vec![0.0, 1.0], vec![-1.0, -0.5]],
            observation: vec![vec![0.0, 1.0]],
            process_noise: vec![vec![0.1, 0.0], vec![0.0, 0.1]],
            obs_noise_var: 0.7,
            prior_mean: vec![1.0, 0.0],
            prior_cov: vec![vec![1.0, 0.2], vec![0.2, 1.0]],
        }
    }
}

/// Finite-state chain for the particle-vs-exact comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteConfig {
    /// `rates[to][from]`; the diagonal is ignored.
    pub rates: Vec<Vec<f64>>,
    pub obs_values: Vec<f64>,
    pub obs_noise_std: f64,
    pub prior: Vec<f64>,
    pub num_agents: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_values: Vec<usize>,
}

impl Default for FiniteConfig {
    fn default() -> Self {
        Self {
            rates: vec![vec![0.0, 0.5, 0.3], vec![0.4, 0.0, 0.6], vec![0.2, 0.5, 0.0]],
            obs_values: vec![0.0, 1.0, 2.0],
            obs_noise_std: 0.5,
            prior: vec![0.5, 0.3, 0.2],
            num_agents: 20,
            dt: 0.01,
            horizon: 2.0,
            n_values: vec![100, 500, 1000, 5000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Agent counts for the change-M sweep.
    pub m_values: Vec<usize>,
    /// Particle counts for the change-N sweep.
    pub n_values: Vec<usize>,
    /// Agent count held fixed in the change-N sweep.
    pub fpf_agents: usize,
    pub num_seeds: usize,
    pub seed: u64,
    pub on_blowup: BlowUpPolicy,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 5.0,
            m_values: vec![1, 2, 5, 10, 20, 50, 100, 200],
            n_values: vec![30, 100, 300, 1000],
            fpf_agents: 30,
            num_seeds: 10,
            seed: 0,
            on_blowup: BlowUpPolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
    /// Write measured wall time into `runtime_s`. Off by default so reruns
    /// are byte-identical; the manifest always carries total wall time.
    pub record_runtime: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub finite: FiniteConfig,
    pub experiment: ExperimentSettings,
    pub output: OutputConfig,
}

fn matrix(name: &'static str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ConfigError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(field(name, "matrix is empty"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(field(name, format!("row {i} has {} entries, expected {ncols}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    /// Parses TOML text; `origin` only labels diagnostics.
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                ConfigError::NotFound(path.to_path_buf())
            } else {
                ConfigError::Read {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.linear_gaussian_model()?;
        self.finite_model()?;
        let e = &self.experiment;
        if !(e.dt > 0.0 && e.dt.is_finite()) {
            return Err(field("experiment.dt", "must be positive"));
        }
        if !(e.horizon >= e.dt) {
            return Err(field("experiment.horizon", "must be at least one step"));
        }
        if e.m_values.is_empty() || e.m_values.contains(&0) {
            return Err(field("experiment.m_values", "must be nonempty with every M >= 1"));
        }
        if e.n_values.is_empty() || e.n_values.iter().any(|&n| n < 2) {
            return Err(field("experiment.n_values", "must be nonempty with every N >= 2"));
        }
        if e.fpf_agents == 0 {
            return Err(field("experiment.fpf_agents", "must be >= 1"));
        }
        if e.num_seeds == 0 {
            return Err(field("experiment.num_seeds", "must be >= 1"));
        }
        let f = &self.finite;
        if !(f.dt > 0.0 && f.dt.is_finite()) {
            return Err(field("finite.dt", "must be positive"));
        }
        if !(f.horizon >= f.dt) {
            return Err(field("finite.horizon", "must be at least one step"));
        }
        if f.num_agents == 0 {
            return Err(field("finite.num_agents", "must be >= 1"));
        }
        if f.n_values.is_empty() || f.n_values.contains(&0) {
            return Err(field("finite.n_values", "must be nonempty with every N >= 1"));
        }
        Ok(())
    }

    pub fn linear_gaussian_model(&self) -> Result<LinearGaussianModel, ConfigError> {
        let m = &self.model;
        if !(m.obs_noise_var > 0.0) {
            return Err(field("model.obs_noise_var", "must be positive"));
        }
        let model = LinearGaussianModel::new(
            matrix("model.drift", &m.drift)?,
            matrix("model.observation", &m.observation)?,
            matrix("model.process_noise", &m.process_noise)?,
            m.obs_noise_var.sqrt(),
            DVector::from_vec(m.prior_mean.clone()),
            matrix("model.prior_cov", &m.prior_cov)?,
        )
        .map_err(|e| field("model", e))?;
        model.observation_row().map_err(|e| field("model.observation", e))?;
        Ok(model)
    }

    pub fn finite_model(&self) -> Result<FiniteStateModel, ConfigError> {
        let f = &self.finite;
        let prior = SimplexBelief::new(f.prior.clone()).map_err(|e| field("finite.prior", e))?;
        FiniteStateModel::new(matrix("finite.rates", &f.rates)?, f.obs_values.clone(), f.obs_noise_std, prior)
            .map_err(|e| field("finite", e))
    }
}
