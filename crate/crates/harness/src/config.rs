//! Run configuration: an embedded TOML default, optionally replaced by a file.

use crate::HarnessError;
use aquasim::dataset::checksum;
use aquasim::learner::{CapConfig, LossConfig};
use aquasim::tasks::SimConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Environment variable naming a config file; `--config` takes precedence.
pub const CONFIG_ENV: &str = "AQUASIM_CONFIG";
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Task filter: comma-separated ids, family names or `all`.
    pub tasks: String,
    pub episodes: usize,
    pub test_fraction: f64,
    pub render: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            tasks: "all".into(),
            episodes: 2,
            test_fraction: 0.1,
            render: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub grid_cells: usize,
    pub cap: CapConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid_cells: aquasim::learner::GRID_CELLS,
            cap: CapConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Rollouts per task in closed-loop evaluation.
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub sim: SimConfig,
    pub generate: GenerateConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// The embedded desk-scale configuration.
    pub fn desk() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("embedded config parses")
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let g = &self.generate;
        if !(g.test_fraction > 0.0 && g.test_fraction < 1.0) {
            return Err(HarnessError::Config(format!("generate.test_fraction {} not in (0, 1)", g.test_fraction)));
        }
        if self.sim.camera.width == 0 || self.sim.camera.height == 0 {
            return Err(HarnessError::Config("camera size must be positive".into()));
        }
        if self.train.grid_cells == 0 {
            return Err(HarnessError::Config("train.grid_cells must be positive".into()));
        }
        self.train.cap.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train.loss.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !self.sim.gains.is_valid() {
            return Err(HarnessError::Config("sim.gains out of range".into()));
        }
        Ok(())
    }

    /// Version tag written into datasets: crate version plus a hash of the
    /// simulator settings, so datasets from different physics never mix silently.
    pub fn sim_version(&self) -> String {
        let json = serde_json::to_string(&self.sim).expect("sim config serializes");
        format!("{}+{:016x}", env!("CARGO_PKG_VERSION"), checksum(json.as_bytes()))
    }
}

/// Picks the config file: explicit path, then [`CONFIG_ENV`], then the
/// embedded default.
pub fn config_source(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

pub fn load_config(explicit: Option<&Path>) -> Result<HarnessConfig, HarnessError> {
    match config_source(explicit) {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| HarnessError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            HarnessConfig::from_toml(&text)
        }
        None => Ok(HarnessConfig::desk()),
    }
}
