//! Pointer measurements: composite subsystem ⊗ pointer states, branch
//! calibration, conditional wave functions and outcome statistics.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivatives::Boundary;
use crate::equilibrium::{rng_stream, CellSampler, EquilibriumError};
use crate::grid::{make_grid, tensor_product, Configuration, Grid, GridError, ParticleSystem, WaveFunction};
use crate::guidance::{EnsembleIntegrator, Ensemble, GuidanceError, IntegratorConfig, TrajectoryStatus};
use crate::propagator::{
    Backend, CouplingOperator, PointerCoupling, Potential, Propagator, PropagatorConfig, PropagatorError,
};

const ORTHOGONALITY_TOLERANCE: f64 = 1e-6;
const COEFFICIENT_TOLERANCE: f64 = 1e-9;
/// Pointer targets must be at least this many packet widths apart.
const MIN_TARGET_SEPARATION: f64 = 8.0;
pub const MIN_TRIALS: usize = 100;
/// Branch overlap `∫|B₁||B₂|` above which the packets count as meeting again.
pub const OVERLAP_LIMIT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("invalid measurement setup: {0}")]
    InvalidSetup(String),
    #[error("calibration failed: branch {branch} has only {mass:.6} of its pointer mass in its region (need {threshold})")]
    Calibration { branch: usize, mass: f64, threshold: f64 },
    #[error("conditional slice at pointer value {0} has zero norm")]
    ZeroNormSlice(f64),
    #[error("{unclassified} of {trials} trials could not be classified (limit {limit})")]
    TooManyUnclassified { unclassified: usize, trials: usize, limit: usize },
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { got: usize, min: usize },
    #[error("branches overlap again at t = {time} (overlap {overlap:e})")]
    BranchesOverlap { time: f64, overlap: f64 },
    #[error("trajectory did not reach the check window (status {0:?})")]
    TrajectoryAborted(TrajectoryStatus),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// How the pointer gets correlated with the subsystem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingMode {
    /// Start directly from `c₁ψ₁⊗φ₁ + c₂ψ₂⊗φ₂`.
    Direct,
    /// Evolve `ψ⊗φ₀` under an impulsive pointer coupling.
    Dynamical(PointerCoupling),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Two disjoint Gaussians for ψ₁, ψ₂ with a dynamical coupling.
    PositionLike,
    /// The two lowest box eigenstates, direct construction.
    EnergyLike,
}

/// Composite setup: subsystem axes first, the pointer is the last axis.
#[derive(Clone, Debug)]
pub struct MeasurementSetup {
    pub subsystem_grid: Grid,
    pub pointer_grid: Grid,
    pub subsystem_mass: f64,
    pub pointer_mass: f64,
    pub hbar: f64,
    pub psi1: WaveFunction,
    pub psi2: WaveFunction,
    pub c1: Complex64,
    pub c2: Complex64,
    /// Ready-state width σ (of |φ₀|²) and centres of φ₁, φ₂.
    pub pointer_width: f64,
    pub pointer_targets: [f64; 2],
    pub coupling: CouplingMode,
    /// Additional potential on the composite grid.
    pub extra_potential: Potential,
    pub boundary: Boundary,
}

/// Pointer-region masses of a composite state; S₁ is `y < 0`, S₂ is `y > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportRegions {
    pub mass_in_s1: f64,
    pub mass_in_s2: f64,
}

impl SupportRegions {
    /// Region of a pointer value: 1 for `y < 0`, 2 otherwise.
    pub fn region_of(y: f64) -> usize {
        if y < 0.0 {
            1
        } else {
            2
        }
    }
}

fn gaussian(grid: &Grid, center: f64, sigma: f64, time: f64) -> WaveFunction {
    let psi = WaveFunction::from_fn(grid, time, |q| Complex64::new((-(q[0] - center).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0))
        .expect("finite Gaussian");
    psi.normalize().expect("Gaussian has positive norm")
}

/// Normalized pointer packet with `|φ|²` of width `width` centred at `center`.
pub fn pointer_packet(grid: &Grid, center: f64, width: f64) -> WaveFunction {
    gaussian(grid, center, width, 0.0)
}

impl MeasurementSetup {
    /// Subsystem Gaussians at ∓8 on a periodic (−16, 16) grid, pointer of mass 4
    /// on (−25.6, 25.6) read off at ±6 at `t_read`, smoothed-sign coupling on over `[0, 0.5]`.
    pub fn position_like(c1: Complex64, c2: Complex64, t_read: f64) -> Self {
        let subsystem_grid = make_grid(&[(-16.0, 16.0)], &[128]).expect("valid grid");
        let pointer_grid = make_grid(&[(-25.6, 25.6)], &[1024]).expect("valid grid");
        let x0 = 8.0;
        let a = 6.0;
        let pointer_mass = 4.0;
        let (t_on, t_off) = (0.0, 0.5);
        let tau = t_off - t_on;
        // impulse −g·A·τ moves the pointer to −g·A·τ·(t_read − t_mid)/M by read-off
        let strength = -a * pointer_mass / (tau * (t_read - 0.5 * (t_on + t_off)));
        let coupling = PointerCoupling {
            strength,
            subsystem_axis: 0,
            operator: CouplingOperator::SmoothSign { center: 0.0, width: 0.5 },
            pointer_axis: 1,
            t_on,
            t_off,
        };
        Self {
            psi1: gaussian(&subsystem_grid, -x0, 1.0, 0.0),
            psi2: gaussian(&subsystem_grid, x0, 1.0, 0.0),
            subsystem_grid,
            pointer_grid,
            subsystem_mass: 1.0,
            pointer_mass,
            hbar: 1.0,
            c1,
            c2,
            pointer_width: 0.5,
            pointer_targets: [-a, a],
            coupling: CouplingMode::Dynamical(coupling),
            extra_potential: Potential::Free,
            boundary: Boundary::Periodic,
        }
    }

    /// Ground and first excited states of a unit box, pointer packets placed at ±6.
    pub fn energy_like(c1: Complex64, c2: Complex64) -> Self {
        let subsystem_grid = make_grid(&[(0.0, 1.0)], &[64]).expect("valid grid");
        let pointer_grid = make_grid(&[(-12.8, 12.8)], &[256]).expect("valid grid");
        let mode = |n: f64| {
            WaveFunction::from_fn(&subsystem_grid, 0.0, |q| Complex64::new((n * std::f64::consts::PI * q[0]).sin(), 0.0))
                .and_then(|w| w.normalize())
                .expect("box mode")
        };
        Self {
            psi1: mode(1.0),
            psi2: mode(2.0),
            subsystem_grid,
            pointer_grid,
            subsystem_mass: 1.0,
            pointer_mass: 10.0,
            hbar: 1.0,
            c1,
            c2,
            pointer_width: 0.5,
            pointer_targets: [-6.0, 6.0],
            coupling: CouplingMode::Direct,
            extra_potential: Potential::Free,
            boundary: Boundary::DirichletZero,
        }
    }

    pub fn from_preset(preset: &Preset, c1: Complex64, c2: Complex64, t_read: f64) -> Self {
        match preset {
            Preset::PositionLike => Self::position_like(c1, c2, t_read),
            Preset::EnergyLike => Self::energy_like(c1, c2),
        }
    }

    pub fn validate(&self) -> Result<(), MeasurementError> {
        let bad = |m: String| Err(MeasurementError::InvalidSetup(m));
        let ds = self.subsystem_grid.dims();
        if self.pointer_grid.dims() != 1 {
            return bad("the pointer is a single coordinate".into());
        }
        if ds + 1 > 3 {
            return bad(format!("composite dimension {} exceeds 3", ds + 1));
        }
        if self.psi1.grid() != &self.subsystem_grid || self.psi2.grid() != &self.subsystem_grid {
            return bad("ψ₁ and ψ₂ must live on the subsystem grid".into());
        }
        for (name, m) in [("subsystem_mass", self.subsystem_mass), ("pointer_mass", self.pointer_mass), ("hbar", self.hbar)] {
            if !(m > 0.0 && m.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (i, psi) in [&self.psi1, &self.psi2].into_iter().enumerate() {
            if (psi.norm() - 1.0).abs() > ORTHOGONALITY_TOLERANCE {
                return bad(format!("ψ{} is not normalized", i + 1));
            }
        }
        let overlap = self.psi1.inner_product(&self.psi2)?.norm();
        if overlap > ORTHOGONALITY_TOLERANCE {
            return bad(format!("⟨ψ₁,ψ₂⟩ = {overlap:e} is not zero"));
        }
        let weight = self.c1.norm_sqr() + self.c2.norm_sqr();
        if (weight - 1.0).abs() > COEFFICIENT_TOLERANCE {
            return bad(format!("|c₁|²+|c₂|² = {weight} must be 1"));
        }
        let sep = (self.pointer_targets[1] - self.pointer_targets[0]).abs();
        if !(self.pointer_width > 0.0) || sep < MIN_TARGET_SEPARATION * self.pointer_width {
            return bad(format!("pointer targets {sep} apart need at least {MIN_TARGET_SEPARATION} packet widths"));
        }
        if !(self.pointer_targets[0] < 0.0 && self.pointer_targets[1] > 0.0) {
            return bad("pointer targets must lie in y < 0 and y > 0".into());
        }
        Ok(())
    }

    pub fn composite_grid(&self) -> Grid {
        self.subsystem_grid.product(&self.pointer_grid).expect("dimension checked by validate")
    }

    pub fn pointer_axis(&self) -> usize {
        self.subsystem_grid.dims()
    }

    pub fn system(&self) -> ParticleSystem {
        ParticleSystem::new(vec![self.subsystem_mass, self.pointer_mass], vec![self.subsystem_grid.dims(), 1], self.hbar)
            .expect("masses validated")
    }

    pub fn subsystem_system(&self) -> ParticleSystem {
        ParticleSystem::new(vec![self.subsystem_mass], vec![self.subsystem_grid.dims()], self.hbar).expect("masses validated")
    }

    pub fn phi0(&self) -> WaveFunction {
        pointer_packet(&self.pointer_grid, 0.0, self.pointer_width)
    }

    /// Full composite potential.
    pub fn potential(&self) -> Potential {
        let mut terms = Vec::new();
        if let CouplingMode::Dynamical(c) = &self.coupling {
            terms.push(Potential::PointerCoupling(c.clone()));
        }
        if !self.extra_potential.is_free() {
            terms.push(self.extra_potential.clone());
        }
        match terms.len() {
            0 => Potential::Free,
            1 => terms.pop().expect("one term"),
            _ => Potential::Sum { terms },
        }
    }

    /// Initial branch states `B₁`, `B₂` with `Ψ = c₁B₁ + c₂B₂`.
    pub fn initial_branches(&self) -> Result<[WaveFunction; 2], MeasurementError> {
        Ok(match self.coupling {
            CouplingMode::Direct => [
                tensor_product(&self.psi1, &pointer_packet(&self.pointer_grid, self.pointer_targets[0], self.pointer_width))?,
                tensor_product(&self.psi2, &pointer_packet(&self.pointer_grid, self.pointer_targets[1], self.pointer_width))?,
            ],
            CouplingMode::Dynamical(_) => {
                let phi0 = self.phi0();
                [tensor_product(&self.psi1, &phi0)?, tensor_product(&self.psi2, &phi0)?]
            }
        })
    }

    fn propagator_config(&self, dt: f64) -> PropagatorConfig {
        match self.boundary {
            Boundary::Periodic => PropagatorConfig::spectral(dt),
            Boundary::DirichletZero => PropagatorConfig { backend: Backend::ImplicitMidpointFd, dt, boundary: Boundary::DirichletZero },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    pub dt: f64,
    /// Read-off time; zero for a direct construction read off immediately.
    pub t_read: f64,
    /// Propagator steps between guidance frames.
    pub frame_stride: usize,
    pub integrator: IntegratorConfig,
    /// Dead zone half-width as a fraction of the target distance.
    pub dead_zone_fraction: f64,
    pub max_unclassified_fraction: f64,
    pub calibration_threshold: f64,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            t_read: 3.0,
            frame_stride: 4,
            integrator: IntegratorConfig::default(),
            dead_zone_fraction: 0.05,
            max_unclassified_fraction: 0.01,
            calibration_threshold: 0.999,
        }
    }
}

/// The two branches evolved in lockstep, plus freely evolved subsystem references.
pub struct BranchEvolution {
    pub c: [Complex64; 2],
    pub branches: [WaveFunction; 2],
    pub references: [WaveFunction; 2],
    composite: Propagator,
    subsystem: Propagator,
    pointer_axis: usize,
}

impl BranchEvolution {
    pub fn new(setup: &MeasurementSetup, dt: f64) -> Result<Self, MeasurementError> {
        setup.validate()?;
        let grid = setup.composite_grid();
        let cfg = setup.propagator_config(dt);
        let composite = Propagator::new(&grid, &setup.system(), &setup.potential(), &cfg)?;
        let subsystem = Propagator::new(&setup.subsystem_grid, &setup.subsystem_system(), &Potential::Free, &cfg)?;
        Ok(Self {
            c: [setup.c1, setup.c2],
            branches: setup.initial_branches()?,
            references: [setup.psi1.clone(), setup.psi2.clone()],
            composite,
            subsystem,
            pointer_axis: setup.pointer_axis(),
        })
    }

    pub fn time(&self) -> f64 {
        self.branches[0].time()
    }

    pub fn step(&mut self) -> Result<(), MeasurementError> {
        for b in &mut self.branches {
            self.composite.step(b)?;
        }
        for r in &mut self.references {
            self.subsystem.step(r)?;
        }
        Ok(())
    }

    /// `Ψ = c₁B₁ + c₂B₂`.
    pub fn psi(&self) -> WaveFunction {
        self.branches[0].combine(self.c[0], &self.branches[1], self.c[1]).expect("branches share a grid")
    }

    /// Ψ with branch `empty` (0 or 1) removed.
    pub fn psi_without(&self, empty: usize) -> WaveFunction {
        let keep = 1 - empty;
        self.branches[keep].scaled(self.c[keep])
    }

    pub fn regions(&self, psi: &WaveFunction) -> SupportRegions {
        support_regions(psi, self.pointer_axis)
    }

    /// `∫|B₁||B₂| dV`.
    pub fn overlap(&self) -> f64 {
        let dv = self.branches[0].grid().cell_volume();
        self.branches[0].amplitudes().iter().zip(self.branches[1].amplitudes()).map(|(a, b)| a.norm() * b.norm()).sum::<f64>() * dv
    }

    /// Pointer mass of each branch in its own region: `[B₁ in S₁, B₂ in S₂]`.
    pub fn calibration(&self) -> [f64; 2] {
        let r1 = support_regions(&self.branches[0], self.pointer_axis);
        let r2 = support_regions(&self.branches[1], self.pointer_axis);
        [r1.mass_in_s1 / (r1.mass_in_s1 + r1.mass_in_s2), r2.mass_in_s2 / (r2.mass_in_s1 + r2.mass_in_s2)]
    }
}

/// Pointer marginal masses in `y < 0` and `y > 0`.
pub fn support_regions(psi: &WaveFunction, pointer_axis: usize) -> SupportRegions {
    let grid = psi.grid();
    let dv = grid.cell_volume();
    let strides = grid.strides();
    let ax = grid.axis(pointer_axis);
    let (mut s1, mut s2) = (0.0, 0.0);
    for (i, p) in psi.density().iter().enumerate() {
        let y = ax.coord((i / strides[pointer_axis]) % ax.points);
        if y < 0.0 {
            s1 += p * dv;
        } else {
            s2 += p * dv;
        }
    }
    SupportRegions { mass_in_s1: s1, mass_in_s2: s2 }
}

fn steps_to(t: f64, dt: f64) -> usize {
    (t / dt).round().max(0.0) as usize
}

/// The post-measurement state and its pointer-region masses.
///
/// For a dynamical coupling each branch is also checked to put at least the
/// calibration threshold of its pointer mass in its own region.
pub fn run_measurement(setup: &MeasurementSetup, cfg: &MeasurementConfig) -> Result<(WaveFunction, SupportRegions), MeasurementError> {
    let mut evo = BranchEvolution::new(setup, cfg.dt)?;
    let steps = match setup.coupling {
        CouplingMode::Direct => 0,
        CouplingMode::Dynamical(_) => steps_to(cfg.t_read, cfg.dt),
    };
    for _ in 0..steps {
        evo.step()?;
    }
    if let CouplingMode::Dynamical(_) = setup.coupling {
        check_calibration(&evo, cfg.calibration_threshold)?;
    }
    let psi = evo.psi();
    let regions = evo.regions(&psi);
    Ok((psi, regions))
}

fn check_calibration(evo: &BranchEvolution, threshold: f64) -> Result<(), MeasurementError> {
    for (i, mass) in evo.calibration().into_iter().enumerate() {
        if !(mass >= threshold) {
            return Err(MeasurementError::Calibration { branch: i + 1, mass, threshold });
        }
    }
    Ok(())
}

/// `ψ_cond(x) = Ψ(x, Y)/‖Ψ(·, Y)‖`, linear in `Y` between pointer nodes.
pub fn conditional_wavefunction(
    psi: &WaveFunction,
    pointer_value: f64,
    pointer_axis: usize,
    boundary: Boundary,
) -> Result<WaveFunction, MeasurementError> {
    let grid = psi.grid();
    if pointer_axis >= grid.dims() || grid.dims() < 2 {
        return Err(MeasurementError::InvalidSetup(format!("pointer axis {pointer_axis} is not a composite axis")));
    }
    let ax = grid.axis(pointer_axis);
    if !(pointer_value >= ax.min && pointer_value <= ax.max) {
        return Err(GridError::OutOfDomain { axis: pointer_axis, value: pointer_value, min: ax.min, max: ax.max }.into());
    }
    let n = ax.points as isize;
    let u = (pointer_value - ax.min) / ax.spacing() - 0.5;
    let j0 = u.floor();
    let frac = u - j0;
    let j0 = j0 as isize;
    let resolve = |j: isize| -> (usize, f64) {
        match boundary {
            Boundary::Periodic => (j.rem_euclid(n) as usize, 1.0),
            Boundary::DirichletZero if j < 0 => ((-1 - j) as usize, -1.0),
            Boundary::DirichletZero if j >= n => ((2 * n - 1 - j) as usize, -1.0),
            Boundary::DirichletZero => (j as usize, 1.0),
        }
    };
    let keep: Vec<usize> = (0..grid.dims()).filter(|a| *a != pointer_axis).collect();
    let sub = grid.select(&keep);
    let strides = grid.strides();
    let mut amps = vec![Complex64::new(0.0, 0.0); sub.len()];
    for (jj, w) in [(j0, 1.0 - frac), (j0 + 1, frac)] {
        let (j, sign) = resolve(jj);
        if w == 0.0 {
            continue;
        }
        for (k, amp) in amps.iter_mut().enumerate() {
            let sub_idx = sub.multi_index(k);
            let mut flat = j * strides[pointer_axis];
            for (s, &a) in sub_idx.iter().zip(&keep) {
                flat += s * strides[a];
            }
            *amp += psi.amplitudes()[flat] * (w * sign);
        }
    }
    let slice = WaveFunction::new(sub, 1, amps, psi.time())?;
    slice.normalize().map_err(|_| MeasurementError::ZeroNormSlice(pointer_value))
}

/// `|⟨a, b⟩|² / (‖a‖²‖b‖²)`.
pub fn fidelity(a: &WaveFunction, b: &WaveFunction) -> Result<f64, MeasurementError> {
    Ok(a.inner_product(b)?.norm_sqr() / (a.norm_sqr() * b.norm_sqr()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    /// Run seed; the trial draws from PRNG stream `trial_id`.
    pub seed: u64,
    pub x0: Vec<f64>,
    pub y0: f64,
    /// 1 or 2; `None` in the dead zone or when the trajectory aborted.
    pub outcome: Option<u8>,
    pub pointer_final: f64,
    /// Fidelity of the final conditional wave function to the outcome branch reference.
    pub fidelity: Option<f64>,
    pub status: TrajectoryStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub n_trials: usize,
    pub counts: [usize; 2],
    pub dead_zone: usize,
    pub aborted: usize,
    pub frequencies: [f64; 2],
    /// `p̂ ± 3·sqrt(p̂(1−p̂)/n)` per outcome.
    pub intervals: [(f64, f64); 2],
    pub expected: [f64; 2],
    pub seed: u64,
}

impl OutcomeReport {
    /// Whether outcome 1 is within three binomial standard deviations of `|c₁|²`.
    pub fn born_rule_holds(&self) -> bool {
        let p = self.expected[0];
        let sigma = (p * (1.0 - p) / self.n_trials as f64).sqrt();
        (self.frequencies[0] - p).abs() <= 3.0 * sigma + 1e-15
    }
}

/// Everything a trial run produced.
pub struct TrialRun {
    pub report: OutcomeReport,
    pub records: Vec<TrialRecord>,
    pub ensemble: Ensemble,
    /// Ψ at every recorded ensemble time.
    pub snapshots: Vec<WaveFunction>,
    pub calibration: Option<[f64; 2]>,
    pub final_regions: SupportRegions,
}

fn draw_trials(psi: &WaveFunction, n: usize, seed: u64) -> Result<Vec<Configuration>, MeasurementError> {
    let sampler = CellSampler::new(psi.grid(), &psi.density())?;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_stream(seed, i as u64);
            Configuration::new(sampler.draw(&mut rng), psi.time())
        })
        .collect())
}

/// Sample trials from equilibrium, run the measurement with trajectories and classify outcomes.
pub fn run_trials(setup: &MeasurementSetup, n_trials: usize, seed: u64, cfg: &MeasurementConfig) -> Result<TrialRun, MeasurementError> {
    if n_trials < MIN_TRIALS {
        return Err(MeasurementError::TooFewTrials { got: n_trials, min: MIN_TRIALS });
    }
    let mut evo = BranchEvolution::new(setup, cfg.dt)?;
    let psi0 = evo.psi();
    let initial = draw_trials(&psi0, n_trials, seed)?;
    let sys = setup.system();
    let mut integ = EnsembleIntegrator::new(&initial, &sys, setup.boundary, &cfg.integrator)?;
    integ.push_frame(&psi0)?;
    let record_every = cfg.integrator.record_every;
    let mut snapshots = vec![psi0];
    let steps = steps_to(cfg.t_read, cfg.dt);
    let stride = cfg.frame_stride.max(1);
    if steps % stride != 0 {
        return Err(MeasurementError::InvalidSetup(format!("{steps} steps are not a multiple of frame_stride {stride}")));
    }
    let frames = steps / stride;
    let mut last = None;
    for f in 1..=frames {
        for _ in 0..stride {
            evo.step()?;
        }
        let psi = evo.psi();
        integ.push_frame(&psi)?;
        if f % record_every == 0 || f == frames {
            snapshots.push(psi.clone());
        }
        if f == frames {
            last = Some(psi);
        }
    }
    let calibration = match setup.coupling {
        CouplingMode::Dynamical(_) => {
            check_calibration(&evo, cfg.calibration_threshold)?;
            Some(evo.calibration())
        }
        CouplingMode::Direct => None,
    };
    let psi_final = last.unwrap_or_else(|| snapshots[0].clone());
    let final_regions = evo.regions(&psi_final);
    let ensemble = integ.finish()?;
    let pointer_axis = setup.pointer_axis();
    let dead = cfg.dead_zone_fraction * setup.pointer_targets[1].abs().min(setup.pointer_targets[0].abs());
    let records: Vec<TrialRecord> = ensemble
        .trajectories
        .par_iter()
        .map(|tr| {
            let start = tr.initial();
            let end = tr.last();
            let y = end.coords[pointer_axis];
            let outcome = (tr.status == TrajectoryStatus::Completed && y.abs() >= dead).then(|| SupportRegions::region_of(y) as u8);
            let fidelity = outcome.and_then(|o| {
                let cond = conditional_wavefunction(&psi_final, y, pointer_axis, setup.boundary).ok()?;
                fidelity(&cond, &evo.references[o as usize - 1]).ok()
            });
            TrialRecord {
                trial_id: tr.seed_index,
                seed,
                x0: start.coords[..pointer_axis].to_vec(),
                y0: start.coords[pointer_axis],
                outcome,
                pointer_final: y,
                fidelity,
                status: tr.status,
            }
        })
        .collect();
    let mut counts = [0usize; 2];
    let mut dead_zone = 0;
    let mut aborted = 0;
    for r in &records {
        match (r.outcome, r.status) {
            (Some(o), _) => counts[o as usize - 1] += 1,
            (None, TrajectoryStatus::Completed) => dead_zone += 1,
            (None, _) => aborted += 1,
        }
    }
    let limit = (cfg.max_unclassified_fraction * n_trials as f64).floor() as usize;
    if dead_zone + aborted > limit {
        return Err(MeasurementError::TooManyUnclassified { unclassified: dead_zone + aborted, trials: n_trials, limit });
    }
    let n = n_trials as f64;
    let frequencies = [counts[0] as f64 / n, counts[1] as f64 / n];
    let intervals = frequencies.map(|p| {
        let half = 3.0 * (p * (1.0 - p) / n).sqrt();
        (p - half, p + half)
    });
    let report = OutcomeReport {
        n_trials,
        counts,
        dead_zone,
        aborted,
        frequencies,
        intervals,
        expected: [setup.c1.norm_sqr(), setup.c2.norm_sqr()],
        seed,
    };
    Ok(TrialRun { report, records, ensemble, snapshots, calibration, final_regions })
}

/// Outcome frequencies and per-trial records.
pub fn outcome_statistics(
    setup: &MeasurementSetup,
    n_trials: usize,
    seed: u64,
    cfg: &MeasurementConfig,
) -> Result<(OutcomeReport, Vec<TrialRecord>), MeasurementError> {
    let run = run_trials(setup, n_trials, seed, cfg)?;
    Ok((run.report, run.records))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Occupied branch (1 or 2) at the separation time.
    pub branch: usize,
    pub times: Vec<f64>,
    /// Fidelity of the conditional wave function to the occupied branch reference.
    pub fidelities: Vec<f64>,
    /// Distance between the trajectory and its twin guided by the occupied branch alone.
    pub deviations: Vec<f64>,
    pub min_fidelity: f64,
    pub max_deviation: f64,
    /// Largest change of `‖c_i B_i‖²` from `|c_i|²`.
    pub branch_mass_drift: f64,
    pub norm_drift: f64,
    pub max_overlap: f64,
}

/// Follow the trajectory from `q0` to `t_end`; after `t_sep` compare its
/// conditional wave function with the occupied branch and its path with one
/// guided by the occupied branch alone.
pub fn effective_wavefunction_check(
    setup: &MeasurementSetup,
    cfg: &MeasurementConfig,
    q0: &Configuration,
    t_sep: f64,
    t_end: f64,
) -> Result<CollapseReport, MeasurementError> {
    let mut reports = effective_wavefunction_checks(setup, cfg, std::slice::from_ref(q0), t_sep, t_end)?;
    Ok(reports.remove(0))
}

/// [`effective_wavefunction_check`] for several trajectories sharing one evolution.
pub fn effective_wavefunction_checks(
    setup: &MeasurementSetup,
    cfg: &MeasurementConfig,
    probes: &[Configuration],
    t_sep: f64,
    t_end: f64,
) -> Result<Vec<CollapseReport>, MeasurementError> {
    if probes.is_empty() {
        return Err(MeasurementError::InvalidSetup("no probe trajectories".into()));
    }
    let mut evo = BranchEvolution::new(setup, cfg.dt)?;
    let sys = setup.system();
    let pointer_axis = setup.pointer_axis();
    let icfg = IntegratorConfig { record_every: 1, ..cfg.integrator.clone() };
    let mut full = EnsembleIntegrator::new(probes, &sys, setup.boundary, &icfg)?;
    full.push_frame(&evo.psi())?;
    let stride = cfg.frame_stride.max(1);
    let frames = steps_to(t_end, cfg.dt) / stride;
    let sep_frame = steps_to(t_sep, cfg.dt).div_ceil(stride);
    // per branch: the twin integrator and, for each of its walkers, the probe index
    let mut twins: Option<[Option<(EnsembleIntegrator, Vec<usize>)>; 2]> = None;
    let blank = CollapseReport {
        branch: 0,
        times: Vec::new(),
        fidelities: Vec::new(),
        deviations: Vec::new(),
        min_fidelity: 1.0,
        max_deviation: 0.0,
        branch_mass_drift: 0.0,
        norm_drift: 0.0,
        max_overlap: 0.0,
    };
    let mut reports = vec![blank; probes.len()];
    let weights = evo.c.map(|c| c.norm_sqr());
    for f in 0..=frames {
        if f > 0 {
            for _ in 0..stride {
                evo.step()?;
            }
            full.push_frame(&evo.psi())?;
        }
        if let Some(status) = full.statuses().into_iter().find(|s| s.is_aborted()) {
            return Err(MeasurementError::TrajectoryAborted(status));
        }
        if f < sep_frame {
            continue;
        }
        let t = evo.time();
        let overlap = evo.overlap();
        if overlap > OVERLAP_LIMIT {
            return Err(MeasurementError::BranchesOverlap { time: t, overlap });
        }
        let positions = full.positions();
        let twins = match twins.as_mut() {
            Some(tw) => {
                for (b, twin) in tw.iter_mut().enumerate() {
                    if let Some((integ, _)) = twin {
                        integ.push_frame(&evo.psi_without(1 - b))?;
                    }
                }
                tw
            }
            None => {
                let mut members = [Vec::new(), Vec::new()];
                for (i, q) in positions.iter().enumerate() {
                    let b = SupportRegions::region_of(q.coords[pointer_axis]) - 1;
                    reports[i].branch = b + 1;
                    members[b].push(i);
                }
                let mut build = |b: usize| -> Result<Option<(EnsembleIntegrator, Vec<usize>)>, MeasurementError> {
                    let ids = std::mem::take(&mut members[b]);
                    if ids.is_empty() {
                        return Ok(None);
                    }
                    let start: Vec<Configuration> = ids.iter().map(|&i| positions[i].clone()).collect();
                    let mut integ = EnsembleIntegrator::new(&start, &sys, setup.boundary, &icfg)?;
                    integ.push_frame(&evo.psi_without(1 - b))?;
                    Ok(Some((integ, ids)))
                };
                let pair = [build(0)?, build(1)?];
                twins.insert(pair)
            }
        };
        let psi = evo.psi();
        let mut mass_drift = 0.0f64;
        for (i, b) in evo.branches.iter().enumerate() {
            let mass = b.norm_sqr() * weights[i];
            mass_drift = mass_drift.max((mass - weights[i]).abs());
        }
        let norm_drift = (psi.norm_sqr() - 1.0).abs();
        for (b, (integ, ids)) in twins.iter().enumerate().filter_map(|(b, tw)| tw.as_ref().map(|tw| (b, tw))) {
            let statuses = integ.statuses();
            let twin_positions = integ.positions();
            for (k, &i) in ids.iter().enumerate() {
                if statuses[k].is_aborted() {
                    return Err(MeasurementError::TrajectoryAborted(statuses[k]));
                }
                let q = &positions[i];
                let deviation =
                    q.coords.iter().zip(&twin_positions[k].coords).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                let cond = conditional_wavefunction(&psi, q.coords[pointer_axis], pointer_axis, setup.boundary)?;
                let fid = fidelity(&cond, &evo.references[b])?;
                let r = &mut reports[i];
                r.max_overlap = r.max_overlap.max(overlap);
                r.branch_mass_drift = r.branch_mass_drift.max(mass_drift);
                r.norm_drift = r.norm_drift.max(norm_drift);
                r.times.push(t);
                r.fidelities.push(fid);
                r.deviations.push(deviation);
                r.min_fidelity = r.min_fidelity.min(fid);
                r.max_deviation = r.max_deviation.max(deviation);
            }
        }
    }
    if reports[0].times.is_empty() {
        return Err(MeasurementError::InvalidSetup("separation time lies after the end of the check window".into()));
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn presets_validate() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        MeasurementSetup::position_like(c(h, 0.0), c(h, 0.0), 3.0).validate().unwrap();
        MeasurementSetup::energy_like(c(0.6, 0.0), c(0.0, 0.8)).validate().unwrap();
        let bad = MeasurementSetup::position_like(c(1.0, 0.0), c(1.0, 0.0), 3.0);
        assert!(matches!(bad.validate(), Err(MeasurementError::InvalidSetup(_))));
    }

    #[test]
    fn direct_construction_gives_two_equal_packets() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let setup = MeasurementSetup::energy_like(c(h, 0.0), c(h, 0.0));
        let (psi, regions) = run_measurement(&setup, &MeasurementConfig { t_read: 0.0, ..Default::default() }).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-9);
        assert!((regions.mass_in_s1 - 0.5).abs() < 1e-9 && (regions.mass_in_s2 - 0.5).abs() < 1e-9);
        let [b1, b2] = setup.initial_branches().unwrap();
        assert!(b1.inner_product(&b2).unwrap().norm() < 1e-6);
    }

    #[test]
    fn conditional_of_product_is_the_factor() {
        let setup = MeasurementSetup::position_like(c(1.0, 0.0), c(0.0, 0.0), 3.0);
        let phi = setup.phi0().scaled(c(0.3, -0.2));
        let product = tensor_product(&setup.psi1, &phi).unwrap();
        for y in [-0.7, 0.0, 0.33] {
            let cond = conditional_wavefunction(&product, y, 1, Boundary::Periodic).unwrap();
            assert!(fidelity(&cond, &setup.psi1).unwrap() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn dynamical_single_branch_calibrates() {
        let setup = MeasurementSetup::position_like(c(1.0, 0.0), c(0.0, 0.0), 3.0);
        let (_, regions) = run_measurement(&setup, &MeasurementConfig::default()).unwrap();
        assert!(regions.mass_in_s1 >= 0.999, "{regions:?}");
    }

    #[test]
    fn weak_coupling_fails_calibration() {
        let mut setup = MeasurementSetup::position_like(c(1.0, 0.0), c(0.0, 0.0), 3.0);
        if let CouplingMode::Dynamical(cpl) = &mut setup.coupling {
            cpl.strength *= 0.01;
        }
        assert!(matches!(run_measurement(&setup, &MeasurementConfig::default()), Err(MeasurementError::Calibration { .. })));
    }
}
