use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    equivariance_checks, manual_recording, node_check, param, positive, scalar_table, snapshot_name, whole_steps,
    Check, Context, Dataset, ScenarioError,
};
use crate::equilibrium::sample_equilibrium;
use crate::grid::{make_grid, Grid, ParticleSystem, WaveFunction};
use crate::guidance::{EnsembleIntegrator, GuidanceField, DEFAULT_NODE_EPSILON};
use crate::io::ensemble_table;
use crate::propagator::{discrete_ground_state, Boundary, Potential, Propagator, PropagatorConfig};

const VELOCITY_BOUND: f64 = 1e-9;
const DRIFT_BOUND: f64 = 1e-8;
const MOVING_BOUND: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryPreset {
    /// Ground state of the unit box `(0, 1)`.
    #[default]
    Box,
    /// Ground state of the oscillator with ω = 1 on `(-8, 8)`.
    Harmonic,
}

/// A real eigenstate evolved in time; its trajectories must stay put.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryRealState {
    pub preset: StationaryPreset,
    pub points: usize,
    pub dt: f64,
    pub t_final: f64,
    pub frame_stride: usize,
    /// Stored frames, evenly spaced over `[0, t_final]`.
    pub snapshots: usize,
    /// Weight of the first excited state in the contrasting superposition.
    pub excited_weight: f64,
    /// Grid velocities are checked where `|ψ|²` exceeds this fraction of its maximum.
    pub support_threshold: f64,
}

impl Default for StationaryRealState {
    fn default() -> Self {
        Self {
            preset: StationaryPreset::Box,
            points: 256,
            dt: 1e-3,
            t_final: 1.0,
            frame_stride: 10,
            snapshots: 3,
            excited_weight: 0.1,
            support_threshold: 1e-6,
        }
    }
}

impl StationaryRealState {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        if self.points < 16 {
            return Err(param("points", "must be at least 16"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        if self.snapshots < 2 {
            return Err(param("snapshots", "must be at least 2"));
        }
        if !(self.excited_weight > 0.0 && self.excited_weight < 1.0) {
            return Err(param("excited_weight", "must lie strictly between 0 and 1"));
        }
        if !(self.support_threshold >= DEFAULT_NODE_EPSILON && self.support_threshold < 1.0) {
            return Err(param("support_threshold", "must lie in [1e-12, 1)"));
        }
        self.frames().map(|_| ())
    }

    /// Total guidance frames and frames between snapshots.
    fn frames(&self) -> Result<(usize, usize), ScenarioError> {
        let steps = whole_steps("t_final", self.t_final, self.dt)?;
        if steps % self.frame_stride != 0 {
            return Err(param("frame_stride", "must divide the number of steps"));
        }
        let frames = steps / self.frame_stride;
        let gaps = self.snapshots - 1;
        if frames % gaps != 0 {
            return Err(param("snapshots", "snapshot spacing must be a whole number of frames"));
        }
        Ok((frames, frames / gaps))
    }

    fn extent(&self) -> (f64, f64) {
        match self.preset {
            StationaryPreset::Box => (0.0, 1.0),
            StationaryPreset::Harmonic => (-8.0, 8.0),
        }
    }

    fn potential(&self) -> Potential {
        match self.preset {
            StationaryPreset::Box => Potential::Free,
            StationaryPreset::Harmonic => Potential::Harmonic { omega: vec![1.0], center: None },
        }
    }

    /// Ground state and a normalized state orthogonal to it.
    pub fn states(&self, grid: &Grid, sys: &ParticleSystem) -> Result<(WaveFunction, WaveFunction), ScenarioError> {
        match self.preset {
            StationaryPreset::Box => {
                let mode = |n: f64| -> Result<WaveFunction, ScenarioError> {
                    let psi = WaveFunction::from_fn(grid, 0.0, |q| Complex64::new((n * PI * q[0]).sin(), 0.0))?;
                    Ok(psi.normalize()?)
                };
                Ok((mode(1.0)?, mode(2.0)?))
            }
            StationaryPreset::Harmonic => {
                let (ground, _) = discrete_ground_state(grid, sys, &self.potential())?;
                let odd = WaveFunction::from_fn(grid, 0.0, |q| Complex64::new(q[0] * (-0.5 * q[0] * q[0]).exp(), 0.0))?;
                let overlap = ground.inner_product(&odd)?;
                let excited = odd.combine(Complex64::new(1.0, 0.0), &ground, -overlap)?.normalize()?;
                Ok((ground, excited))
            }
        }
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let (frames, snap_every) = self.frames()?;
        let (lo, hi) = self.extent();
        let grid = make_grid(&[(lo, hi)], &[self.points])?;
        let sys = ParticleSystem::new(vec![ctx.physics.mass], vec![1], ctx.physics.hbar)?;
        let potential = self.potential();
        let (ground, excited) = self.states(&grid, &sys)?;
        let pcfg = PropagatorConfig::implicit_dirichlet(self.dt);

        let mut ds = Dataset::default();
        let samples = sample_equilibrium(&ground, ctx.n, ctx.seed)?;
        let cfg = manual_recording(&ctx.integrator);
        let mut integ = EnsembleIntegrator::new(&samples.configurations, &sys, Boundary::DirichletZero, &cfg)?;
        let mut prop = Propagator::new(&grid, &sys, &potential, &pcfg)?;
        let mut psi = ground;
        for j in 0..=frames {
            if j > 0 {
                for _ in 0..self.frame_stride {
                    prop.step(&mut psi)?;
                }
            }
            integ.push_frame(&psi)?;
            if j % snap_every == 0 {
                integ.record();
                ds.insert_frame(snapshot_name(j / snap_every), psi.clone());
            }
        }
        let ensemble = integ.finish()?;
        ds.insert_table("trajectories", ensemble_table(&ensemble));

        let w = self.excited_weight;
        let mut mixed = ds.frame(&snapshot_name(0))?.combine(
            Complex64::new((1.0 - w).sqrt(), 0.0),
            &excited,
            Complex64::new(w.sqrt(), 0.0),
        )?;
        ds.insert_frame("superposition_000", mixed.clone());
        let mut prop = Propagator::new(&grid, &sys, &potential, &pcfg)?;
        for _ in 0..snap_every * self.frame_stride {
            prop.step(&mut mixed)?;
        }
        ds.insert_frame("superposition_001", mixed.clone());
        ds.insert_table("summary", scalar_table(&[("final_norm", psi.norm_sqr())]));
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let sys = ParticleSystem::new(vec![ctx.physics.mass], vec![1], ctx.physics.hbar)?;
        let (lo, hi) = self.extent();
        let scale = ctx.physics.mass * (hi - lo) / ctx.physics.hbar;
        let max_speed = |psi: &WaveFunction| -> Result<f64, ScenarioError> {
            let field = GuidanceField::new(psi, &sys, Boundary::DirichletZero)?;
            Ok(field.velocity_on_grid(self.support_threshold).into_iter().flatten().map(|v| v[0].abs()).fold(0.0, f64::max))
        };

        let mut grid_speed = 0.0f64;
        for (_, psi) in ds.frames_with_prefix("psi_") {
            grid_speed = grid_speed.max(max_speed(psi)? * scale);
        }
        let ensemble = ds.ensemble("trajectories")?;
        let drift = ensemble
            .completed()
            .flat_map(|tr| {
                let x0 = tr.initial().coords[0];
                tr.samples.iter().map(move |c| (c.coords[0] - x0).abs())
            })
            .fold(0.0, f64::max);
        let mixed_start = max_speed(ds.frame("superposition_000")?)? * scale;
        let mixed_later = max_speed(ds.frame("superposition_001")?)? * scale;

        let mut checks = vec![
            Check::at_most("max_scaled_grid_velocity", grid_speed, VELOCITY_BOUND),
            Check::at_most("max_trajectory_drift", drift, DRIFT_BOUND),
            Check::at_most("superposition_initial_scaled_velocity", mixed_start, VELOCITY_BOUND),
            Check::at_least("superposition_later_scaled_velocity", mixed_later, MOVING_BOUND),
        ];
        checks.extend(equivariance_checks(ds, &ensemble, ctx.calibration_seed())?);
        checks.push(node_check(&ensemble));
        Ok(checks)
    }
}
