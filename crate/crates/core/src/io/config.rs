//! Run configuration: TOML or JSON by file extension, with defaults for every
//! optional field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cahn_hilliard::ChScheme;
use crate::coupled::{CouplingConfig, InitialData};
use crate::error::{NschError, Result};
use crate::geometry::{build_disk_mesh, DiskMesh};
use crate::materials::{ModelParameters, ValidationReport};
use crate::stokes::{MomentumForm, StokesVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_rings")]
    pub n_rings: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_rings() -> usize {
    16
}
fn default_radius() -> f64 {
    1.0
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { n_rings: default_rings(), radius: default_radius() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    /// Field output every `stride` steps; 0 disables field output.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    200
}
fn default_stride() -> usize {
    20
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: default_dt(), n_steps: default_steps(), stride: default_stride() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default)]
    pub ch: ChScheme,
    #[serde(default)]
    pub momentum: MomentumForm,
    #[serde(default)]
    pub stokes_variant: StokesVariant,
    #[serde(default = "default_sweeps")]
    pub picard_sweeps: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
}

fn default_sweeps() -> usize {
    1
}
fn default_retries() -> usize {
    5
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_max_newton() -> usize {
    50
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            ch: ChScheme::default(),
            momentum: MomentumForm::default(),
            stokes_variant: StokesVariant::default(),
            picard_sweeps: default_sweeps(),
            max_retries: default_retries(),
            newton_tol: default_newton_tol(),
            max_newton: default_max_newton(),
        }
    }
}

/// Velocity imposed in `ch-only` runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrescribedVelocity {
    #[default]
    Zero,
    RigidRotation { omega: f64 },
}

/// Settings of the verification subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_eig_count")]
    pub eig_count: usize,
    #[serde(default = "default_convergence_rings")]
    pub convergence_rings: Vec<usize>,
    #[serde(default)]
    pub prescribed_velocity: PrescribedVelocity,
}

fn default_epsilons() -> Vec<f64> {
    vec![1e-3, 1e-4, 1e-5]
}
fn default_t_final() -> f64 {
    0.1
}
fn default_eig_count() -> usize {
    8
}
fn default_convergence_rings() -> Vec<usize> {
    vec![8, 16, 32]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            t_final: default_t_final(),
            eig_count: default_eig_count(),
            convergence_rings: default_convergence_rings(),
            prescribed_velocity: PrescribedVelocity::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mesh: MeshConfig,
    pub params: ModelParameters,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Lifts the K-range gate; results are outside the verified envelope.
    #[serde(default)]
    pub experimental: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("toml") => Ok(ConfigFormat::Toml),
            Some("json") => Ok(ConfigFormat::Json),
            _ => Err(NschError::Config(format!(
                "{}: unknown configuration format (expected .toml or .json)",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ConfigFormat::Toml => "toml",
            ConfigFormat::Json => "json",
        }
    }
}

impl Default for RunConfig {
    /// Logarithmic potentials with Θ = 1, Θ_c = 2 in the bulk and on the boundary.
    fn default() -> Self {
        let log = crate::materials::PotentialSpec::logarithmic(1.0, 2.0);
        Self::with_params(ModelParameters::with_potentials(log.clone(), log))
    }
}

impl RunConfig {
    /// Defaults everywhere, with the given model parameters.
    pub fn with_params(params: ModelParameters) -> Self {
        Self {
            mesh: MeshConfig::default(),
            params,
            time: TimeConfig::default(),
            scheme: SchemeConfig::default(),
            initial: InitialData::default(),
            experiment: ExperimentConfig::default(),
            output_dir: None,
            seed: 0,
            experimental: false,
        }
    }

    /// Parses without validating the model assumptions.
    pub fn from_str_as(text: &str, format: ConfigFormat) -> Result<Self> {
        match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| NschError::Config(format!("malformed TOML: {e}"))),
            ConfigFormat::Json => {
                serde_json::from_str(text).map_err(|e| NschError::Config(format!("malformed JSON: {e}")))
            }
        }
    }

    pub fn to_string_as(&self, format: ConfigFormat) -> Result<String> {
        match format {
            ConfigFormat::Toml => {
                toml::to_string_pretty(self).map_err(|e| NschError::Config(format!("cannot encode TOML: {e}")))
            }
            ConfigFormat::Json => serde_json::to_string_pretty(self)
                .map_err(|e| NschError::Config(format!("cannot encode JSON: {e}"))),
        }
    }

    pub fn mesh(&self) -> Result<DiskMesh> {
        if self.mesh.n_rings == 0 {
            return Err(NschError::Config("mesh.n_rings must be at least 1".into()));
        }
        if !(self.mesh.radius > 0.0 && self.mesh.radius.is_finite()) {
            return Err(NschError::Config(format!("mesh.radius must be positive, got {}", self.mesh.radius)));
        }
        build_disk_mesh(self.mesh.n_rings, self.mesh.radius)
    }

    /// Checks the time settings and the model assumptions.
    pub fn validate(&self) -> Result<ValidationReport> {
        if !(self.time.dt > 0.0 && self.time.dt.is_finite()) {
            return Err(NschError::Config(format!("time.dt must be positive, got {}", self.time.dt)));
        }
        if self.scheme.picard_sweeps == 0 || self.scheme.picard_sweeps > 3 {
            return Err(NschError::Config("scheme.picard_sweeps must be 1, 2 or 3".into()));
        }
        let mesh = self.mesh()?;
        self.params.validate(&mesh, self.experimental)
    }

    pub fn coupling(&self) -> CouplingConfig {
        CouplingConfig {
            dt: self.time.dt,
            scheme: self.scheme.ch,
            momentum: self.scheme.momentum,
            stokes_variant: self.scheme.stokes_variant,
            picard_sweeps: self.scheme.picard_sweeps,
            max_retries: self.scheme.max_retries,
            newton_tol: self.scheme.newton_tol,
            max_newton: self.scheme.max_newton,
        }
    }
}

/// A parsed and validated configuration together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub format: ConfigFormat,
    pub validation: ValidationReport,
}

impl LoadedConfig {
    pub fn new(config: RunConfig, source: String, format: ConfigFormat) -> Result<Self> {
        let validation = config.validate()?;
        Ok(Self { config, source, format, validation })
    }

    /// A configuration that did not come from a file; its source is the resolved TOML.
    pub fn from_config(config: RunConfig) -> Result<Self> {
        let source = config.to_string_as(ConfigFormat::Toml)?;
        Self::new(config, source, ConfigFormat::Toml)
    }
}

/// Reads and parses without validating, so that command-line overrides can be applied
/// first.
pub fn read_config(path: &Path) -> Result<(RunConfig, String, ConfigFormat)> {
    let format = ConfigFormat::from_path(path)?;
    let source = std::fs::read_to_string(path)
        .map_err(|e| NschError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::from_str_as(&source, format)?;
    Ok((config, source, format))
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let (config, source, format) = read_config(path)?;
    LoadedConfig::new(config, source, format)
}
