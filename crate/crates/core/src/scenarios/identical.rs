use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    equivariance_checks, manual_recording, node_check, param, positive, scalar_table, snapshot_name, whole_steps,
    Check, Context, Dataset, ScenarioError,
};
use crate::equilibrium::sample_equilibrium;
use crate::grid::{make_grid, Configuration, Grid, ParticleSystem, WaveFunction};
use crate::guidance::{permute_labels, EnsembleIntegrator, TrajectoryStatus};
use crate::io::{ensemble_table, Table};
use crate::propagator::{Boundary, Potential, Propagator, PropagatorConfig};

const MIRROR_TOLERANCE: f64 = 1e-6;
const SWAP: [usize; 2] = [1, 0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Symmetric,
    #[default]
    Antisymmetric,
}

impl Symmetry {
    fn sign(self) -> f64 {
        match self {
            Symmetry::Symmetric => 1.0,
            Symmetry::Antisymmetric => -1.0,
        }
    }
}

/// Two identical particles on a line, in colliding Gaussian packets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdenticalParticles {
    pub symmetry: Symmetry,
    /// Each coordinate spans `(-half_width, half_width)`.
    pub half_width: f64,
    /// Points per coordinate.
    pub points: usize,
    /// Packets start at `±separation / 2`.
    pub separation: f64,
    pub sigma: f64,
    /// Packets move towards each other with wavenumbers `±k0`.
    pub k0: f64,
    pub dt: f64,
    pub t_final: f64,
    pub frame_stride: usize,
    pub snapshot_interval: f64,
    /// Pairs integrated together with their label-swapped copies.
    pub mirror_pairs: usize,
    /// Frames between recorded samples of the mirror set.
    pub mirror_record_every: usize,
}

impl Default for IdenticalParticles {
    fn default() -> Self {
        Self {
            symmetry: Symmetry::Antisymmetric,
            half_width: 16.0,
            points: 512,
            separation: 6.0,
            sigma: 1.0,
            k0: 2.0,
            dt: 0.01,
            t_final: 3.0,
            frame_stride: 2,
            snapshot_interval: 1.0,
            mirror_pairs: 1000,
            mirror_record_every: 10,
        }
    }
}

struct Schedule {
    frames: usize,
    snapshot_every: usize,
}

impl IdenticalParticles {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("half_width", self.half_width)?;
        positive("separation", self.separation)?;
        positive("sigma", self.sigma)?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        if !self.k0.is_finite() {
            return Err(param("k0", "must be finite"));
        }
        if self.points < 2 || !self.points.is_power_of_two() {
            return Err(param("points", "must be a power of two"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        if self.mirror_record_every == 0 {
            return Err(param("mirror_record_every", "must be at least 1"));
        }
        if 0.5 * self.separation + 10.0 * self.sigma > self.half_width {
            return Err(param("half_width", "packets must start at least ten widths inside the domain"));
        }
        self.schedule().map(|_| ())
    }

    fn schedule(&self) -> Result<Schedule, ScenarioError> {
        let steps = whole_steps("t_final", self.t_final, self.dt)?;
        if steps % self.frame_stride != 0 {
            return Err(param("frame_stride", "must divide the number of steps"));
        }
        let frames = steps / self.frame_stride;
        let snapshot_every = whole_steps("snapshot_interval", self.snapshot_interval, self.dt * self.frame_stride as f64)?;
        Ok(Schedule { frames, snapshot_every })
    }

    pub fn system(&self, ctx: &Context) -> Result<ParticleSystem, ScenarioError> {
        let m = ctx.physics.mass;
        Ok(ParticleSystem::new(vec![m, m], vec![1, 1], ctx.physics.hbar)?)
    }

    pub fn grid(&self) -> Result<Grid, ScenarioError> {
        let w = self.half_width;
        Ok(make_grid(&[(-w, w), (-w, w)], &[self.points, self.points])?)
    }

    /// `φ_L(x₁)φ_R(x₂) ± φ_R(x₁)φ_L(x₂)`, normalized.
    pub fn initial_state(&self, grid: &Grid) -> Result<WaveFunction, ScenarioError> {
        let (a, s, k) = (0.5 * self.separation, self.sigma, self.k0);
        let packet = |x: f64, c: f64, k: f64| {
            Complex64::from_polar((-(x - c) * (x - c) / (4.0 * s * s)).exp(), k * x)
        };
        let sign = self.symmetry.sign();
        let psi = WaveFunction::from_fn(grid, 0.0, |q| {
            packet(q[0], -a, k) * packet(q[1], a, -k) + sign * packet(q[0], a, -k) * packet(q[1], -a, k)
        })?;
        Ok(psi.normalize()?)
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let sched = self.schedule()?;
        let grid = self.grid()?;
        let sys = self.system(ctx)?;
        let mut psi = self.initial_state(&grid)?;
        let mut prop = Propagator::new(&grid, &sys, &Potential::Free, &PropagatorConfig::spectral(self.dt))?;

        let samples = sample_equilibrium(&psi, ctx.n, ctx.seed)?;
        let cfg = manual_recording(&ctx.integrator);
        let mut ensemble = EnsembleIntegrator::new(&samples.configurations, &sys, Boundary::Periodic, &cfg)?;
        let mirror_seed = ctx.seed.wrapping_add(1);
        let pairs = sample_equilibrium(&psi, self.mirror_pairs, mirror_seed)?;
        let mut mirror_start = pairs.configurations.clone();
        for q in &pairs.configurations {
            mirror_start.push(permute_labels(q, &sys, &SWAP)?);
        }
        let mut mirror = EnsembleIntegrator::new(&mirror_start, &sys, Boundary::Periodic, &cfg)?;

        let mut ds = Dataset::default();
        let n = ctx.n;
        let mut side = vec![0.0f64; n];
        let mut crossings = vec![0usize; n];
        let mut min_sep = vec![f64::INFINITY; n];
        for j in 0..=sched.frames {
            if j > 0 {
                for _ in 0..self.frame_stride {
                    prop.step(&mut psi)?;
                }
            }
            ensemble.push_frame(&psi)?;
            mirror.push_frame(&psi)?;
            let statuses = ensemble.statuses();
            for (i, q) in ensemble.positions().iter().enumerate() {
                if statuses[i] != TrajectoryStatus::Completed {
                    continue;
                }
                let d = q.coords[0] - q.coords[1];
                min_sep[i] = min_sep[i].min(d.abs());
                let s = d.signum();
                if j > 0 && s != side[i] && side[i] != 0.0 {
                    crossings[i] += 1;
                }
                if s != 0.0 {
                    side[i] = s;
                }
            }
            if j % sched.snapshot_every == 0 {
                ensemble.record();
                ds.insert_frame(snapshot_name(j / sched.snapshot_every), psi.clone());
            }
            if j % self.mirror_record_every == 0 {
                mirror.record();
            }
        }
        let statuses = ensemble.statuses();
        let ensemble = ensemble.finish()?;
        let mirror = mirror.finish()?;

        let mut pairs = Table::new(["trajectory_id", "min_separation", "diagonal_crossings", "status"]);
        for i in 0..n {
            pairs.push(vec![i.into(), min_sep[i].into(), crossings[i].into(), statuses[i].as_str().into()]);
        }
        ds.insert_table("pairs", pairs);
        ds.insert_table("trajectories", ensemble_table(&ensemble));
        ds.insert_table("mirror", ensemble_table(&mirror));
        ds.insert_table("summary", scalar_table(&[("final_norm", psi.norm_sqr()), ("v_max", ensemble.v_max)]));
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let sys = self.system(ctx)?;
        let mirror = ds.ensemble("mirror")?;
        let half = mirror.len() / 2;
        if mirror.len() != 2 * self.mirror_pairs {
            return Err(ScenarioError::Dataset(format!("mirror table has {} trajectories", mirror.len())));
        }
        let mut deviation = 0.0f64;
        for (a, b) in mirror.trajectories[..half].iter().zip(&mirror.trajectories[half..]) {
            if a.status != TrajectoryStatus::Completed || b.status != TrajectoryStatus::Completed {
                continue;
            }
            for (qa, qb) in a.samples.iter().zip(&b.samples) {
                let swapped = permute_labels(&Configuration::new(qa.coords.clone(), qa.time), &sys, &SWAP)?;
                let d = swapped.coords.iter().zip(&qb.coords).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                deviation = deviation.max(d);
            }
        }
        let mut checks = vec![Check::at_most("mirror_max_deviation", deviation, MIRROR_TOLERANCE)];

        if self.symmetry == Symmetry::Antisymmetric {
            let pairs = ds.table("pairs")?;
            let crossings: f64 = pairs.f64_column("diagonal_crossings")?.iter().sum();
            checks.push(Check::at_most("diagonal_crossings", crossings, 0.0));
        }
        let ensemble = ds.ensemble("trajectories")?;
        checks.extend(equivariance_checks(ds, &ensemble, ctx.calibration_seed())?);
        checks.push(node_check(&ensemble));
        Ok(checks)
    }
}
