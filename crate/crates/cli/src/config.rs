//! Run configuration files (TOML) and their command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vcpanel::{BootstrapConfig, FitInit, FitOptions, GammaUpdate, LongCsvSchema, McSpec};

use crate::error::{CliError, CliResult};

pub const DEFAULT_GRID_SIZE: usize = 201;
pub const DEFAULT_CV_FACTORS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ife,
    Lsdv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum FactorChoice {
    Fixed { r: usize },
    Bic { r_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum KnotChoice {
    Fixed { interior: usize },
    Cv { grid: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Pca,
    GammaFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub init: InitKind,
    pub update: GammaUpdate,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = FitOptions::default();
        FitSettings {
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
            init: InitKind::Pca,
            update: d.update,
        }
    }
}

impl FitSettings {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            init: match self.init {
                InitKind::Pca => FitInit::PcaOfY,
                InitKind::GammaFirst => FitInit::GammaFirst,
            },
            update: self.update,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub draws: usize,
    pub alpha: f64,
    pub block_constant: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        BootstrapSettings {
            draws: d.n_draws,
            alpha: d.alpha,
            block_constant: d.block_constant,
        }
    }
}

/// Everything `fit` and `select` need besides the data path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_factors")]
    pub factors: FactorChoice,
    #[serde(default = "default_knots")]
    pub knots: KnotChoice,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default)]
    pub bootstrap: Option<BootstrapSettings>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Factor count used while cross-validating knots when `r` is itself selected.
    #[serde(default = "default_cv_factors")]
    pub cv_factors: usize,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub schema: LongCsvSchema,
}

fn default_model() -> ModelKind {
    ModelKind::Ife
}
fn default_factors() -> FactorChoice {
    FactorChoice::Fixed { r: 2 }
}
fn default_knots() -> KnotChoice {
    KnotChoice::Fixed { interior: 4 }
}
fn default_degree() -> usize {
    3
}
fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}
fn default_cv_factors() -> usize {
    DEFAULT_CV_FACTORS
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Invalid(m.to_string()));
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.model == ModelKind::Lsdv && matches!(self.factors, FactorChoice::Bic { .. }) {
            return bad("factor selection applies to the ife model only");
        }
        if let KnotChoice::Cv { grid } = &self.knots {
            if grid.is_empty() {
                return bad("knots.grid is empty");
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if let Some(b) = &self.bootstrap {
            self.bootstrap_config(b).validate()?;
        }
        Ok(())
    }

    pub fn bootstrap_config(&self, b: &BootstrapSettings) -> BootstrapConfig {
        BootstrapConfig {
            n_draws: b.draws,
            alpha: b.alpha,
            block_constant: b.block_constant,
            seed: self.seed,
        }
    }
}

/// Simulation file: a `[simulation]` table holding the Monte Carlo spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub threads: Option<usize>,
    pub simulation: McSpec,
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
