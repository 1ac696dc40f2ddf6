use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::CliError;
use crate::io::{self, FRAME_VERSION};
use crate::scenarios::{Artifact, Check};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub frame_format: u32,
    /// SHA-256 of the canonical configuration text stored in `config.toml`.
    pub config_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub sampling: u64,
    pub calibration: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

/// Everything needed to re-verify a run from its directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario_id: String,
    pub claim: String,
    pub manifest: Manifest,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub pass: bool,
    /// Wall-clock time; the only field that differs between identical runs.
    pub timing: Timing,
}

impl ScenarioReport {
    pub fn new(config: &RunConfig, artifacts: Vec<Artifact>, checks: Vec<Check>, wall_seconds: f64) -> Self {
        let ctx = config.context();
        Self {
            schema_version: SCHEMA_VERSION,
            scenario_id: config.scenario.id().into(),
            claim: config.scenario.claim().into(),
            manifest: Manifest {
                crate_version: env!("CARGO_PKG_VERSION").into(),
                frame_format: FRAME_VERSION,
                config_sha256: io::sha256_hex(config.canonical().as_bytes()),
            },
            config: config.clone(),
            seeds: Seeds { sampling: ctx.seed, calibration: ctx.calibration_seed() },
            artifacts,
            pass: checks.iter().all(|c| c.pass),
            checks,
            timing: Timing { wall_seconds },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        io::write_file(&dir.join(REPORT_FILE), self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let bytes = io::read_file(&dir.join(REPORT_FILE)).map_err(|e| CliError::Verify(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Verify(format!("{REPORT_FILE}: {e}")))
    }
}

/// Differences between stored and recomputed checks, one line each.
pub fn check_discrepancies(stored: &[Check], recomputed: &[Check], stored_pass: bool) -> Vec<String> {
    let mut out = Vec::new();
    let same = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
    for c in stored {
        if c.pass != c.recomputed_pass() {
            out.push(format!("{}: stored pass flag {} contradicts {:e} vs bound {:e}", c.name, c.pass, c.statistic, c.bound));
        }
        match recomputed.iter().find(|r| r.name == c.name) {
            None => out.push(format!("{}: not produced by the stored data", c.name)),
            Some(r) => {
                if !same(c.statistic, r.statistic) {
                    out.push(format!("{}: statistic stored {:e}, recomputed {:e}", c.name, c.statistic, r.statistic));
                }
                if !same(c.bound, r.bound) || c.relation != r.relation {
                    out.push(format!("{}: bound stored {:e}, recomputed {:e}", c.name, c.bound, r.bound));
                }
                if c.pass != r.pass {
                    out.push(format!("{}: pass stored {}, recomputed {}", c.name, c.pass, r.pass));
                }
            }
        }
    }
    for r in recomputed {
        if !stored.iter().any(|c| c.name == r.name) {
            out.push(format!("{}: missing from the report", r.name));
        }
    }
    let all = recomputed.iter().all(|c| c.pass);
    if stored_pass != all {
        out.push(format!("overall pass: stored {stored_pass}, recomputed {all}"));
    }
    out
}
