use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    node_check, param, positive, prefixed_equivariance_checks, scalar_table, Check, Context, Dataset, ScenarioError,
};
use crate::equilibrium::sample_equilibrium;
use crate::guidance::IntegratorConfig;
use crate::io::{ensemble_table, Table};
use crate::measurement::{
    effective_wavefunction_checks, BranchEvolution, MeasurementConfig, MeasurementError, MeasurementSetup, Preset,
    TrialRun,
};
use crate::propagator::Potential;

const CALIBRATION_BOUND: f64 = 0.999;
const MAX_UNCLASSIFIED: f64 = 0.01;
const FIDELITY_BOUND: f64 = 0.999;
const DEVIATION_BOUND: f64 = 1e-6;
const MASS_DRIFT_BOUND: f64 = 1e-6;

fn check_weight(field: &str, w: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(param(field, format!("must lie in [0, 1], got {w}")))
    }
}

fn coefficients(weight1: f64, phase: f64) -> (Complex64, Complex64) {
    (Complex64::new(weight1.sqrt(), 0.0), Complex64::from_polar((1.0 - weight1).sqrt(), phase))
}

/// Shared timing of a measurement run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Readout {
    pub dt: f64,
    pub t_read: f64,
    pub frame_stride: usize,
    /// Stored frames, evenly spaced over `[0, t_read]`.
    pub snapshots: usize,
}

impl Default for Readout {
    fn default() -> Self {
        Self { dt: 0.005, t_read: 3.0, frame_stride: 4, snapshots: 4 }
    }
}

impl Readout {
    fn validate(&self) -> Result<(), ScenarioError> {
        positive("dt", self.dt)?;
        if !(self.t_read >= 0.0 && self.t_read.is_finite()) {
            return Err(param("t_read", "must be non-negative"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        self.record_every().map(|_| ())
    }

    fn frames(&self) -> Result<usize, ScenarioError> {
        let steps = (self.t_read / self.dt).round();
        if (steps * self.dt - self.t_read).abs() > 1e-9 * self.t_read.max(self.dt) {
            return Err(param("t_read", "must be a whole number of steps"));
        }
        let steps = steps as usize;
        if steps % self.frame_stride != 0 {
            return Err(param("frame_stride", "must divide the number of steps"));
        }
        Ok(steps / self.frame_stride)
    }

    fn record_every(&self) -> Result<usize, ScenarioError> {
        let frames = self.frames()?;
        if frames == 0 {
            return Ok(1);
        }
        if self.snapshots < 2 || frames % (self.snapshots - 1) != 0 {
            return Err(param("snapshots", "at least 2, and the frame count must split evenly between them"));
        }
        Ok(frames / (self.snapshots - 1))
    }

    /// Configuration that turns classification and calibration limits into checks.
    fn config(&self, integrator: &IntegratorConfig) -> Result<MeasurementConfig, ScenarioError> {
        Ok(MeasurementConfig {
            dt: self.dt,
            t_read: self.t_read,
            frame_stride: self.frame_stride,
            integrator: IntegratorConfig { record_every: self.record_every()?, ..integrator.clone() },
            max_unclassified_fraction: 1.0,
            calibration_threshold: 0.0,
            ..MeasurementConfig::default()
        })
    }
}

fn run(setup: &MeasurementSetup, ctx: &Context, readout: &Readout, seed: u64) -> Result<TrialRun, ScenarioError> {
    let cfg = readout.config(&ctx.integrator)?;
    Ok(crate::measurement::run_trials(setup, ctx.n, seed, &cfg)?)
}

/// Store a trial run under `prefix`: frames `{prefix}psi_###` and tables
/// `{prefix}trials`, `{prefix}trajectories`, `{prefix}summary`.
fn store(ds: &mut Dataset, prefix: &str, run: &TrialRun) {
    for (i, psi) in run.snapshots.iter().enumerate() {
        ds.insert_frame(format!("{prefix}psi_{i:03}"), psi.clone());
    }
    let mut trials = Table::new(["trial_id", "x0", "y0", "outcome", "pointer_final", "fidelity", "status"]);
    for r in &run.records {
        trials.push(vec![
            r.trial_id.into(),
            r.x0.first().copied().unwrap_or(f64::NAN).into(),
            r.y0.into(),
            (r.outcome.unwrap_or(0) as usize).into(),
            r.pointer_final.into(),
            r.fidelity.unwrap_or(f64::NAN).into(),
            r.status.as_str().into(),
        ]);
    }
    ds.insert_table(format!("{prefix}trials"), trials);
    ds.insert_table(format!("{prefix}trajectories"), ensemble_table(&run.ensemble));
    let [c1, c2] = run.calibration.unwrap_or([f64::NAN; 2]);
    ds.insert_table(
        format!("{prefix}summary"),
        scalar_table(&[
            ("calibration_1", c1),
            ("calibration_2", c2),
            ("final_mass_s1", run.final_regions.mass_in_s1),
            ("final_mass_s2", run.final_regions.mass_in_s2),
        ]),
    );
}

/// Outcome counts `[unclassified, outcome 1, outcome 2]` from a trials table.
fn outcome_counts(ds: &Dataset, prefix: &str) -> Result<[usize; 3], ScenarioError> {
    let mut counts = [0usize; 3];
    for o in ds.table(&format!("{prefix}trials"))?.f64_column("outcome")? {
        match o as usize {
            k @ 0..=2 => counts[k] += 1,
            _ => return Err(ScenarioError::Dataset(format!("outcome {o} is not 0, 1 or 2"))),
        }
    }
    Ok(counts)
}

/// Classification, calibration, equivariance and node checks of a stored run.
fn run_checks(ctx: &Context, ds: &Dataset, prefix: &str, dynamical: bool) -> Result<Vec<Check>, ScenarioError> {
    let counts = outcome_counts(ds, prefix)?;
    let total = counts.iter().sum::<usize>().max(1) as f64;
    let mut checks = vec![Check::at_most(format!("{prefix}unclassified_fraction"), counts[0] as f64 / total, MAX_UNCLASSIFIED)];
    if dynamical {
        let summary = format!("{prefix}summary");
        let cal = ds.value(&summary, "calibration_1")?.min(ds.value(&summary, "calibration_2")?);
        checks.push(Check::at_least(format!("{prefix}calibration_min"), cal, CALIBRATION_BOUND));
    }
    let ensemble = ds.ensemble(&format!("{prefix}trajectories"))?;
    checks.extend(prefixed_equivariance_checks(ds, &format!("{prefix}psi_"), prefix, &ensemble, ctx.calibration_seed())?);
    let mut node = node_check(&ensemble);
    node.name = format!("{prefix}{}", node.name);
    checks.push(node);
    Ok(checks)
}

/// Outcome frequencies of a two-outcome pointer measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BornRule {
    pub preset: Preset,
    /// `|c₁|²`.
    pub weight1: f64,
    /// Phase of `c₂` relative to `c₁`.
    pub relative_phase: f64,
    pub readout: Readout,
}

impl Default for BornRule {
    fn default() -> Self {
        Self { preset: Preset::PositionLike, weight1: 0.36, relative_phase: 0.0, readout: Readout::default() }
    }
}

impl BornRule {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_weight("weight1", self.weight1)?;
        if !self.relative_phase.is_finite() {
            return Err(param("relative_phase", "must be finite"));
        }
        self.readout.validate()
    }

    pub fn setup(&self) -> MeasurementSetup {
        let (c1, c2) = coefficients(self.weight1, self.relative_phase);
        MeasurementSetup::from_preset(&self.preset, c1, c2, self.readout.t_read)
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let run = run(&self.setup(), ctx, &self.readout, ctx.seed)?;
        let mut ds = Dataset::default();
        store(&mut ds, "", &run);
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let [_, n1, n2] = outcome_counts(ds, "")?;
        let classified = (n1 + n2).max(1) as f64;
        let p = self.weight1;
        let f1 = n1 as f64 / classified;
        let sigma = (p * (1.0 - p) / classified).sqrt();
        let mut checks = vec![Check::at_most("born_frequency_deviation", (f1 - p).abs(), 3.0 * sigma)];
        if p == 1.0 {
            checks.push(Check::at_most("born_rule_exceptions", n2 as f64, 0.0));
        } else if p == 0.0 {
            checks.push(Check::at_most("born_rule_exceptions", n1 as f64, 0.0));
        }
        checks.extend(run_checks(ctx, ds, "", matches!(self.preset, Preset::PositionLike))?);
        Ok(checks)
    }
}

/// States prepared inside one outcome subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspacePair {
    pub preset: Preset,
    pub readout: Readout,
}

impl Default for SubspacePair {
    fn default() -> Self {
        Self { preset: Preset::EnergyLike, readout: Readout { t_read: 1.0, snapshots: 3, ..Readout::default() } }
    }
}

impl SubspacePair {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.readout.validate()
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let mut ds = Dataset::default();
        for (k, (c1, c2)) in [(1.0, 0.0), (0.0, 1.0)].into_iter().enumerate() {
            let setup = MeasurementSetup::from_preset(
                &self.preset,
                Complex64::new(c1, 0.0),
                Complex64::new(c2, 0.0),
                self.readout.t_read,
            );
            let run = run(&setup, ctx, &self.readout, ctx.seed.wrapping_add(k as u64))?;
            store(&mut ds, &format!("case{}_", k + 1), &run);
        }
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let mut checks = Vec::new();
        for k in 1..=2 {
            let prefix = format!("case{k}_");
            let counts = outcome_counts(ds, &prefix)?;
            let wrong = counts[3 - k];
            checks.push(Check::at_most(format!("{prefix}exceptions"), wrong as f64, 0.0));
            checks.extend(run_checks(ctx, ds, &prefix, matches!(self.preset, Preset::PositionLike))?);
        }
        Ok(checks)
    }
}

/// The occupied branch alone guides the configuration once the pointer packets separate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveCollapse {
    pub weight1: f64,
    pub relative_phase: f64,
    pub dt: f64,
    pub t_read: f64,
    pub frame_stride: usize,
    /// Start of the comparison window.
    pub t_sep: f64,
    pub t_end: f64,
    /// Trajectories drawn from equilibrium and followed through the window.
    pub probes: usize,
    /// Pointer frequency of the contrasting run in which the packets swing back together.
    pub recombine_omega: f64,
    /// Pointer packets of the contrasting run start at `±recombine_offset`.
    pub recombine_offset: f64,
    pub recombine_dt: f64,
    pub recombine_t_end: f64,
}

impl Default for EffectiveCollapse {
    fn default() -> Self {
        Self {
            weight1: 0.5,
            relative_phase: 0.0,
            dt: 0.005,
            t_read: 3.0,
            frame_stride: 4,
            t_sep: 3.0,
            t_end: 4.5,
            probes: 16,
            recombine_omega: 0.4,
            recombine_offset: 3.0,
            recombine_dt: 0.01,
            recombine_t_end: 4.0,
        }
    }
}

impl EffectiveCollapse {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check_weight("weight1", self.weight1)?;
        positive("dt", self.dt)?;
        positive("t_read", self.t_read)?;
        positive("t_end", self.t_end)?;
        positive("recombine_omega", self.recombine_omega)?;
        positive("recombine_offset", self.recombine_offset)?;
        positive("recombine_dt", self.recombine_dt)?;
        positive("recombine_t_end", self.recombine_t_end)?;
        if !(self.t_sep >= 0.0 && self.t_sep < self.t_end) {
            return Err(param("t_sep", "must lie in [0, t_end)"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        if self.probes == 0 {
            return Err(param("probes", "must be at least 1"));
        }
        Ok(())
    }

    fn config(&self, ctx: &Context) -> MeasurementConfig {
        MeasurementConfig {
            dt: self.dt,
            t_read: self.t_read,
            frame_stride: self.frame_stride,
            integrator: ctx.integrator.clone(),
            ..MeasurementConfig::default()
        }
    }

    /// Energy-like setup whose pointer sits in a harmonic well, so its packets meet again.
    pub fn recombining_setup(&self) -> MeasurementSetup {
        let (c1, c2) = coefficients(self.weight1, self.relative_phase);
        let mut setup = MeasurementSetup::energy_like(c1, c2);
        setup.pointer_targets = [-self.recombine_offset, self.recombine_offset];
        setup.extra_potential = Potential::Harmonic { omega: vec![0.0, self.recombine_omega], center: None };
        setup
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let (c1, c2) = coefficients(self.weight1, self.relative_phase);
        let setup = MeasurementSetup::position_like(c1, c2, self.t_read);
        let psi0 = BranchEvolution::new(&setup, self.dt)?.psi();
        let probes = sample_equilibrium(&psi0, self.probes, ctx.seed)?.configurations;
        let cfg = self.config(ctx);
        let reports = effective_wavefunction_checks(&setup, &cfg, &probes, self.t_sep, self.t_end)?;

        let mut ds = Dataset::default();
        let mut table = Table::new(["probe_id", "branch", "time", "fidelity", "deviation"]);
        for (i, r) in reports.iter().enumerate() {
            for ((t, f), d) in r.times.iter().zip(&r.fidelities).zip(&r.deviations) {
                table.push(vec![i.into(), r.branch.into(), (*t).into(), (*f).into(), (*d).into()]);
            }
        }
        ds.insert_table("collapse", table);
        let worst = |f: fn(&crate::measurement::CollapseReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
        let mut summary = vec![
            ("branch_mass_drift", worst(|r| r.branch_mass_drift)),
            ("norm_drift", worst(|r| r.norm_drift)),
            ("max_overlap", worst(|r| r.max_overlap)),
        ];

        let counter = self.recombining_setup();
        let psi0 = BranchEvolution::new(&counter, self.recombine_dt)?.psi();
        let probe = sample_equilibrium(&psi0, 1, ctx.seed.wrapping_add(1))?.configurations;
        let counter_cfg = MeasurementConfig { dt: self.recombine_dt, t_read: 0.0, frame_stride: 2, ..cfg };
        let (detected, time) = match effective_wavefunction_checks(&counter, &counter_cfg, &probe, 0.0, self.recombine_t_end) {
            Err(MeasurementError::BranchesOverlap { time, .. }) => (1.0, time),
            Ok(_) => (0.0, f64::NAN),
            Err(e) => return Err(e.into()),
        };
        summary.push(("recombination_detected", detected));
        summary.push(("recombination_time", time));
        ds.insert_table("summary", scalar_table(&summary));
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, _ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let table = ds.table("collapse")?;
        let min_fid = table.f64_column("fidelity")?.into_iter().fold(f64::INFINITY, f64::min);
        let max_dev = table.f64_column("deviation")?.into_iter().fold(0.0, f64::max);
        Ok(vec![
            Check::at_least("min_fidelity", min_fid, FIDELITY_BOUND),
            Check::at_most("max_deviation", max_dev, DEVIATION_BOUND),
            Check::at_most("branch_mass_drift", ds.value("summary", "branch_mass_drift")?, MASS_DRIFT_BOUND),
            Check::at_least("recombination_detected", ds.value("summary", "recombination_detected")?, 1.0),
        ])
    }
}
