//! Batch front end: run a configured scenario, verify a stored run, list scenarios.
//!
//! Exit codes: 0 all checks pass (or a run verifies), 1 a check fails or a
//! verification finds discrepancies, 2 configuration or input errors,
//! 3 numerical failures.

pub mod config;
pub mod plots;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{OutputConfig, RunConfig, Sampling, OUTPUT_ENV};
pub use report::{check_discrepancies, ScenarioReport, CONFIG_FILE, REPORT_FILE, SCHEMA_VERSION};

use crate::io::{self, IoError};
use crate::scenarios::{self, store, Artifact, ArtifactKind, Check, Dataset, ScenarioError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("verification error: {0}")]
    Verify(String),
    #[error("report disagrees with its data:\n  {}", .0.join("\n  "))]
    Discrepancies(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Discrepancies(_) => 1,
            CliError::Config(_) | CliError::Io(_) | CliError::Verify(_) => 2,
            CliError::Scenario(ScenarioError::Parameter { .. }) => 2,
            CliError::Scenario(_) => 3,
        }
    }
}

/// Overrides applied on top of a configuration file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Root for runs without an explicit directory.
    pub output_root: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: ScenarioReport,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.pass {
            0
        } else {
            1
        }
    }
}

/// Use `workers` threads for ensemble work; must run before any parallel work.
pub fn configure_workers(workers: usize) -> Result<(), CliError> {
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))
}

pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.sampling.seed = seed;
    }
    run_config(&cfg, opts)
}

pub fn run_config(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let dir = cfg.run_dir(opts.output.as_deref(), opts.output_root.as_deref());
    let ctx = cfg.context();
    let id = cfg.scenario.id();
    let start = Instant::now();
    eprintln!("[{id}] simulating {} trajectories, seed {}", ctx.n, ctx.seed);
    let ds = cfg.scenario.simulate(&ctx)?;
    eprintln!("[{id}] evaluating checks");
    let checks = cfg.scenario.evaluate(&ctx, &ds)?;
    eprintln!("[{id}] writing {}", dir.display());
    let artifacts = write_run(&dir, cfg, &ds)?;
    let report = ScenarioReport::new(cfg, artifacts, checks, start.elapsed().as_secs_f64());
    report.save(&dir)?;
    eprintln!("[{id}] done in {:.1} s", report.timing.wall_seconds);
    Ok(RunOutcome { dir, report })
}

fn write_run(dir: &Path, cfg: &RunConfig, ds: &Dataset) -> Result<Vec<Artifact>, CliError> {
    io::write_file(&dir.join(CONFIG_FILE), cfg.canonical().as_bytes())?;
    let mut artifacts = ds.save(dir)?;
    let out = &cfg.output;
    if out.plots || out.histograms {
        for (name, table) in plots::plot_tables(ds, out.plots, out.histograms)? {
            let path = format!("plots/{name}.csv");
            artifacts.push(store(dir, &name, ArtifactKind::Plot, path, table.to_csv().as_bytes())?);
        }
    }
    Ok(artifacts)
}

/// Re-evaluate a stored run from its data and compare with its report.
pub fn verify(dir: &Path) -> Result<ScenarioReport, CliError> {
    let report = ScenarioReport::load(dir)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(CliError::Verify(format!("unsupported report schema {}", report.schema_version)));
    }
    let mut problems = Vec::new();
    let config_text = report.config.canonical();
    if io::sha256_hex(config_text.as_bytes()) != report.manifest.config_sha256 {
        problems.push("config in report does not match the manifest hash".to_string());
    }
    match io::read_file(&dir.join(CONFIG_FILE)) {
        Ok(bytes) if io::sha256_hex(&bytes) == report.manifest.config_sha256 => {}
        Ok(_) => problems.push(format!("hash mismatch: {CONFIG_FILE}")),
        Err(_) => problems.push(format!("missing file: {CONFIG_FILE}")),
    }
    for a in &report.artifacts {
        match io::read_file(&dir.join(&a.path)) {
            Ok(bytes) if io::sha256_hex(&bytes) == a.sha256 && bytes.len() as u64 == a.bytes => {}
            Ok(bytes) => problems.push(format!(
                "hash mismatch: {} (expected {} over {} bytes, found {} over {} bytes)",
                a.path,
                a.sha256,
                a.bytes,
                io::sha256_hex(&bytes),
                bytes.len()
            )),
            Err(_) => problems.push(format!("missing file: {}", a.path)),
        }
    }
    if !problems.is_empty() {
        return Err(CliError::Verify(problems.join("; ")));
    }
    report.config.validate()?;
    let ds = Dataset::load(dir, &report.artifacts)?;
    let checks = report.config.scenario.evaluate(&report.config.context(), &ds)?;
    let discrepancies = check_discrepancies(&report.checks, &checks, report.pass);
    if discrepancies.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Discrepancies(discrepancies))
    }
}

/// One line per check: `PASS name statistic <= bound`.
pub fn format_checks(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let rel = match c.relation {
            scenarios::Relation::AtMost => "<=",
            scenarios::Relation::AtLeast => ">=",
        };
        let flag = if c.pass { "PASS" } else { "FAIL" };
        out.push_str(&format!("{flag} {} {:.6e} {rel} {:.6e}\n", c.name, c.statistic, c.bound));
    }
    out
}

/// Scenario catalog, as text or JSON.
pub fn list_scenarios(json: bool) -> String {
    let catalog = scenarios::catalog();
    if json {
        let mut s = serde_json::to_string_pretty(&catalog).expect("catalog serializes");
        s.push('\n');
        return s;
    }
    let mut out = String::new();
    for entry in &catalog {
        out.push_str(&format!("{}\n    claim: {}\n    parameters:", entry.id, entry.claim));
        if let Some(params) = entry.parameters.as_object() {
            for (k, v) in params {
                out.push_str(&format!(" {k}={v}"));
            }
        }
        out.push('\n');
    }
    out
}
