use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::guidance::IntegratorConfig;
use crate::scenarios::{Context, Physics, ScenarioSpec};

/// Environment variable naming the root under which runs are written.
pub const OUTPUT_ENV: &str = "BOHMIAN_OUTPUT";

/// A run configuration file.
///
/// ```toml
/// [scenario]
/// id = "box_release"
/// k_mode = 800
///
/// [sampling]
/// n = 10000
/// seed = 7
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    /// Ensemble size, or number of trials for measurement scenarios.
    pub n: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { n: 10_000, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Run directory; when absent the run goes under the output root.
    pub dir: Option<PathBuf>,
    /// Write down-sampled density and trajectory CSVs under `plots/`.
    pub plots: bool,
    /// Write position histograms against `|ψ|²` under `plots/`.
    pub histograms: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, plots: true, histograms: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.context().validate()?;
        self.scenario.validate()?;
        Ok(())
    }

    pub fn context(&self) -> Context {
        Context {
            physics: self.physics.clone(),
            n: self.sampling.n,
            seed: self.sampling.seed,
            integrator: self.integrator.clone(),
        }
    }

    /// Canonical TOML text; its hash identifies the configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Run directory: explicit override, then `[output] dir`, then
    /// `<root>/<scenario>-seed<seed>` with the root from [`OUTPUT_ENV`] or `runs`.
    pub fn run_dir(&self, overridden: Option<&Path>, env_root: Option<&Path>) -> PathBuf {
        if let Some(dir) = overridden {
            return dir.to_path_buf();
        }
        if let Some(dir) = &self.output.dir {
            return dir.clone();
        }
        let root = env_root.map_or_else(|| PathBuf::from("runs"), Path::to_path_buf);
        root.join(format!("{}-seed{}", self.scenario.id(), self.sampling.seed))
    }
}
