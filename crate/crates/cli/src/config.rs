//! TOML run configuration. Every key is optional; command-line flags win.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use smaqp_core::io::ColumnSchema;
use smaqp_core::simulation::{ErrorLaw, Example};
use smaqp_core::{Error, FitConfig, Method, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub fit: Option<FitConfig>,
    pub simulate: SimulateSection,
    pub bodyfat: BodyfatSection,
    pub data: DataSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub example: Option<Example>,
    pub n_tr: Option<usize>,
    pub n_te: Option<usize>,
    pub error: Option<ErrorLaw>,
    pub taus: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyfatSection {
    pub input: Option<PathBuf>,
    pub n_tr: Option<Vec<usize>>,
    pub splits: Option<usize>,
    pub taus: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
    pub bootstrap: Option<usize>,
    pub weights_tau: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub input: Option<PathBuf>,
    pub schema: Option<ColumnSchema>,
    pub model: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn fit_config(&self) -> FitConfig {
        self.fit.clone().unwrap_or_default()
    }
}
