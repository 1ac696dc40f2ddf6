//! Canonical experiments with statistical checks.
//!
//! Every scenario splits into a simulation that produces a [`Dataset`] and a
//! pure evaluation that turns a dataset into [`Check`]s. Stored runs are
//! re-verified by evaluating the dataset read back from disk.

mod box_release;
mod double_slit;
mod free_gaussian;
mod identical;
mod measurement;
mod stationary;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use box_release::BoxRelease;
pub use double_slit::DoubleSlit;
pub use free_gaussian::FreeGaussian;
pub use identical::{IdenticalParticles, Symmetry};
pub use measurement::{BornRule, EffectiveCollapse, Readout, SubspacePair};
pub use stationary::{StationaryPreset, StationaryRealState};

use crate::equilibrium::{equivariance_test, EquilibriumError, StatisticKind};
use crate::grid::{GridError, WaveFunction};
use crate::guidance::{Ensemble, GuidanceError, IntegratorConfig, TrajectoryStatus};
use crate::io::{self, IoError, Table};
use crate::measurement::MeasurementError;
use crate::propagator::PropagatorError;

/// Largest tolerated fraction of trajectories stopped at a node.
pub const NODE_FRACTION_LIMIT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid parameter {field}: {message}")]
    Parameter { field: String, message: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl ScenarioError {
    /// Whether the failure comes from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ScenarioError::Propagator(PropagatorError::NonFinite { .. })
                | ScenarioError::Propagator(PropagatorError::TimeStepTooLarge { .. })
                | ScenarioError::Propagator(PropagatorError::SolverStalled { .. })
                | ScenarioError::Guidance(GuidanceError::AllAborted)
        )
    }
}

pub(crate) fn param(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parameter { field: field.into(), message: message.into() }
}

pub(crate) fn positive(field: &str, value: f64) -> Result<(), ScenarioError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(param(field, format!("must be positive, got {value}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

/// Shared run inputs besides the scenario parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub physics: Physics,
    /// Ensemble size (trials for measurement scenarios).
    pub n: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

impl Context {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { physics: Physics::default(), n, seed, integrator: IntegratorConfig::default() }
    }

    /// Seed for null-distribution calibration, distinct from the sampling seed.
    pub fn calibration_seed(&self) -> u64 {
        self.seed ^ 0x9E37_79B9_7F4A_7C15
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("physics.hbar", self.physics.hbar)?;
        positive("physics.mass", self.physics.mass)?;
        if self.n == 0 {
            return Err(param("sampling.n", "must be at least 1"));
        }
        self.integrator.validate().map_err(|e| param("integrator", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub statistic: f64,
    #[serde(deserialize_with = "io::f64_or_nan")]
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, statistic: f64, relation: Relation, bound: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => statistic <= bound,
            Relation::AtLeast => statistic >= bound,
        };
        Self { name: name.into(), statistic, bound, relation, pass }
    }

    pub fn at_most(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, statistic, Relation::AtMost, bound)
    }

    pub fn at_least(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, statistic, Relation::AtLeast, bound)
    }

    /// Re-derive the pass flag from statistic, relation and bound.
    pub fn recomputed_pass(&self) -> bool {
        Check::new("", self.statistic, self.relation, self.bound).pass
    }
}

/// Named frames and tables produced by a scenario run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub frames: BTreeMap<String, WaveFunction>,
    pub tables: BTreeMap<String, Table>,
}

/// A stored dataset file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub kind: ArtifactKind,
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Frame,
    Table,
    /// Plot-ready CSV; hashed but not part of the evaluated dataset.
    Plot,
}

impl Dataset {
    pub fn frame(&self, name: &str) -> Result<&WaveFunction, ScenarioError> {
        self.frames.get(name).ok_or_else(|| ScenarioError::Dataset(format!("missing frame {name}")))
    }

    pub fn table(&self, name: &str) -> Result<&Table, ScenarioError> {
        self.tables.get(name).ok_or_else(|| ScenarioError::Dataset(format!("missing table {name}")))
    }

    pub fn ensemble(&self, name: &str) -> Result<Ensemble, ScenarioError> {
        Ok(io::ensemble_from_table(self.table(name)?)?)
    }

    /// Scalar from a `name,value` table.
    pub fn value(&self, table: &str, name: &str) -> Result<f64, ScenarioError> {
        let t = self.table(table)?;
        let names = t.text_column("name")?;
        let values = t.f64_column("value")?;
        names
            .iter()
            .position(|n| n == name)
            .map(|i| values[i])
            .ok_or_else(|| ScenarioError::Dataset(format!("table {table} has no entry {name}")))
    }

    pub fn insert_frame(&mut self, name: impl Into<String>, psi: WaveFunction) {
        self.frames.insert(name.into(), psi);
    }

    pub fn insert_table(&mut self, name: impl Into<String>, table: Table) {
        self.tables.insert(name.into(), table);
    }

    /// Frames whose names start with `prefix`, in name order.
    pub fn frames_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a String, &'a WaveFunction)> + 'a {
        self.frames.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    /// Write frames under `frames/` and tables under `tables/`.
    pub fn save(&self, dir: &Path) -> Result<Vec<Artifact>, ScenarioError> {
        let mut out = Vec::new();
        for (name, psi) in &self.frames {
            let mut bytes = Vec::new();
            io::write_frame(&mut bytes, psi)?;
            out.push(store(dir, name, ArtifactKind::Frame, format!("frames/{name}.bwf"), &bytes)?);
        }
        for (name, table) in &self.tables {
            let bytes = table.to_csv().into_bytes();
            out.push(store(dir, name, ArtifactKind::Table, format!("tables/{name}.csv"), &bytes)?);
        }
        Ok(out)
    }

    /// Read artifacts back; the caller checks hashes first.
    pub fn load(dir: &Path, artifacts: &[Artifact]) -> Result<Self, ScenarioError> {
        let mut ds = Dataset::default();
        for a in artifacts.iter().filter(|a| a.kind != ArtifactKind::Plot) {
            let bytes = io::read_file(&dir.join(&a.path))?;
            match a.kind {
                ArtifactKind::Frame => {
                    ds.frames.insert(a.name.clone(), io::decode_frame(&bytes)?);
                }
                ArtifactKind::Table => {
                    let text = String::from_utf8(bytes).map_err(|e| ScenarioError::Dataset(format!("{}: {e}", a.path)))?;
                    ds.tables.insert(a.name.clone(), Table::from_csv(&text)?);
                }
                ArtifactKind::Plot => {}
            }
        }
        Ok(ds)
    }
}

pub(crate) fn store(dir: &Path, name: &str, kind: ArtifactKind, path: String, bytes: &[u8]) -> Result<Artifact, ScenarioError> {
    io::write_file(&dir.join(&path), bytes)?;
    Ok(Artifact { name: name.into(), kind, path, sha256: io::sha256_hex(bytes), bytes: bytes.len() as u64 })
}

/// Name of the `i`-th stored snapshot.
pub(crate) fn snapshot_name(i: usize) -> String {
    format!("psi_{i:03}")
}

/// Positions of completed trajectories recorded at time `t`.
pub fn positions_at_time(ensemble: &Ensemble, t: f64) -> Vec<Vec<f64>> {
    let tol = 1e-9 * t.abs().max(1e-12);
    ensemble
        .completed()
        .filter_map(|tr| tr.samples.iter().find(|c| (c.time - t).abs() <= tol).map(|c| c.coords.clone()))
        .collect()
}

/// One binned-TV equivariance check per stored snapshot.
pub(crate) fn equivariance_checks(ds: &Dataset, ensemble: &Ensemble, seed: u64) -> Result<Vec<Check>, ScenarioError> {
    prefixed_equivariance_checks(ds, "psi_", "", ensemble, seed)
}

/// Equivariance checks for frames named `{prefix}...`, with check names prefixed by `label`.
pub(crate) fn prefixed_equivariance_checks(
    ds: &Dataset,
    prefix: &str,
    label: &str,
    ensemble: &Ensemble,
    seed: u64,
) -> Result<Vec<Check>, ScenarioError> {
    let mut checks = Vec::new();
    for (_, psi) in ds.frames_with_prefix(prefix) {
        let positions = positions_at_time(ensemble, psi.time());
        let psi = psi.normalize()?;
        let r = equivariance_test(&positions, &psi, StatisticKind::TotalVariationBinned, None, seed)?;
        checks.push(Check::at_most(format!("{label}equivariance_tv_t={:.6e}", psi.time()), r.value, r.null_bound));
    }
    Ok(checks)
}

pub(crate) fn node_check(ensemble: &Ensemble) -> Check {
    let frac = ensemble.count(TrajectoryStatus::AbortedNode) as f64 / ensemble.len().max(1) as f64;
    Check::at_most("aborted_node_fraction", frac, NODE_FRACTION_LIMIT)
}

/// `name,value` table of scalar diagnostics.
pub(crate) fn scalar_table(entries: &[(&str, f64)]) -> Table {
    let mut t = Table::new(["name", "value"]);
    for (k, v) in entries {
        t.push(vec![(*k).into(), (*v).into()]);
    }
    t
}

/// Scenario selection plus its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ScenarioSpec {
    FreeGaussian(FreeGaussian),
    BoxRelease(BoxRelease),
    DoubleSlit(DoubleSlit),
    StationaryRealState(StationaryRealState),
    IdenticalParticles(IdenticalParticles),
    BornRule(BornRule),
    EffectiveCollapse(EffectiveCollapse),
    SubspacePair(SubspacePair),
}

impl ScenarioSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ScenarioSpec::FreeGaussian(_) => "free_gaussian",
            ScenarioSpec::BoxRelease(_) => "box_release",
            ScenarioSpec::DoubleSlit(_) => "double_slit",
            ScenarioSpec::StationaryRealState(_) => "stationary_real_state",
            ScenarioSpec::IdenticalParticles(_) => "identical_particles",
            ScenarioSpec::BornRule(_) => "born_rule",
            ScenarioSpec::EffectiveCollapse(_) => "effective_collapse",
            ScenarioSpec::SubspacePair(_) => "subspace_pair",
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            ScenarioSpec::FreeGaussian(s) => s.validate(),
            ScenarioSpec::BoxRelease(s) => s.validate(),
            ScenarioSpec::DoubleSlit(s) => s.validate(),
            ScenarioSpec::StationaryRealState(s) => s.validate(),
            ScenarioSpec::IdenticalParticles(s) => s.validate(),
            ScenarioSpec::BornRule(s) => s.validate(),
            ScenarioSpec::EffectiveCollapse(s) => s.validate(),
            ScenarioSpec::SubspacePair(s) => s.validate(),
        }
    }

    pub fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        ctx.validate()?;
        self.validate()?;
        match self {
            ScenarioSpec::FreeGaussian(s) => s.simulate(ctx),
            ScenarioSpec::BoxRelease(s) => s.simulate(ctx),
            ScenarioSpec::DoubleSlit(s) => s.simulate(ctx),
            ScenarioSpec::StationaryRealState(s) => s.simulate(ctx),
            ScenarioSpec::IdenticalParticles(s) => s.simulate(ctx),
            ScenarioSpec::BornRule(s) => s.simulate(ctx),
            ScenarioSpec::EffectiveCollapse(s) => s.simulate(ctx),
            ScenarioSpec::SubspacePair(s) => s.simulate(ctx),
        }
    }

    pub fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        match self {
            ScenarioSpec::FreeGaussian(s) => s.evaluate(ctx, ds),
            ScenarioSpec::BoxRelease(s) => s.evaluate(ctx, ds),
            ScenarioSpec::DoubleSlit(s) => s.evaluate(ctx, ds),
            ScenarioSpec::StationaryRealState(s) => s.evaluate(ctx, ds),
            ScenarioSpec::IdenticalParticles(s) => s.evaluate(ctx, ds),
            ScenarioSpec::BornRule(s) => s.evaluate(ctx, ds),
            ScenarioSpec::EffectiveCollapse(s) => s.evaluate(ctx, ds),
            ScenarioSpec::SubspacePair(s) => s.evaluate(ctx, ds),
        }
    }

    /// Simulate, then evaluate the resulting dataset.
    pub fn run(&self, ctx: &Context) -> Result<(Dataset, Vec<Check>), ScenarioError> {
        let ds = self.simulate(ctx)?;
        let checks = self.evaluate(ctx, &ds)?;
        Ok((ds, checks))
    }

    /// Every scenario with default parameters.
    pub fn all_defaults() -> Vec<ScenarioSpec> {
        vec![
            ScenarioSpec::FreeGaussian(FreeGaussian::default()),
            ScenarioSpec::BoxRelease(BoxRelease::default()),
            ScenarioSpec::DoubleSlit(DoubleSlit::default()),
            ScenarioSpec::StationaryRealState(StationaryRealState::default()),
            ScenarioSpec::IdenticalParticles(IdenticalParticles::default()),
            ScenarioSpec::BornRule(BornRule::default()),
            ScenarioSpec::EffectiveCollapse(EffectiveCollapse::default()),
            ScenarioSpec::SubspacePair(SubspacePair::default()),
        ]
    }

    pub fn claim(&self) -> &'static str {
        match self {
            ScenarioSpec::FreeGaussian(_) => "trajectories of a spreading Gaussian follow X(t) = x0·σ(t)/σ0",
            ScenarioSpec::BoxRelease(_) => {
                "a particle released from a box eigenstate moves asymptotically at ±ħk/m, each sign with probability 1/2"
            }
            ScenarioSpec::DoubleSlit(_) => {
                "particles through the upper slit land on the upper half of the screen; which-way marking removes the fringes"
            }
            ScenarioSpec::StationaryRealState(_) => "a particle guided by a real eigenstate stands still",
            ScenarioSpec::IdenticalParticles(_) => {
                "the flow is equivariant under label permutations; antisymmetric states keep particles from passing each other"
            }
            ScenarioSpec::BornRule(_) => "outcome i of a pointer measurement occurs with probability |c_i|²",
            ScenarioSpec::EffectiveCollapse(_) => {
                "after the pointer branches separate the occupied branch alone guides the configuration"
            }
            ScenarioSpec::SubspacePair(_) => "a state prepared inside one outcome subspace yields that outcome every time",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub claim: &'static str,
    /// Parameter names with their default values.
    pub parameters: serde_json::Value,
}

pub fn catalog() -> Vec<CatalogEntry> {
    ScenarioSpec::all_defaults()
        .into_iter()
        .map(|s| {
            let mut parameters = serde_json::to_value(&s).expect("parameters serialize");
            if let Some(obj) = parameters.as_object_mut() {
                obj.remove("id");
            }
            CatalogEntry { id: s.id(), claim: s.claim(), parameters }
        })
        .collect()
}

/// Whole number of `dt` steps in `span`, or a parameter error naming `field`.
pub(crate) fn whole_steps(field: &str, span: f64, dt: f64) -> Result<usize, ScenarioError> {
    let n = (span / dt).round();
    if n < 1.0 || (n * dt - span).abs() > 1e-9 * span.abs().max(dt) {
        return Err(param(field, format!("{span} is not a whole number of steps of {dt}")));
    }
    Ok(n as usize)
}

/// Integrator settings for scenarios that decide themselves when to record.
pub(crate) fn manual_recording(cfg: &IntegratorConfig) -> IntegratorConfig {
    IntegratorConfig { record_every: usize::MAX, ..cfg.clone() }
}
