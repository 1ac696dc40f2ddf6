use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    equivariance_checks, manual_recording, node_check, param, positive, scalar_table, snapshot_name, Check, Context,
    Dataset, ScenarioError,
};
use crate::equilibrium::sample_equilibrium;
use crate::grid::{make_grid, Grid, ParticleSystem, WaveFunction};
use crate::guidance::{EnsembleIntegrator, Trajectory};
use crate::io::ensemble_table;
use crate::propagator::{release_walls, Boundary, Potential, Propagator, PropagatorConfig};

const SPEED_TOLERANCE: f64 = 0.02;
const MIN_SPEED_FRACTION: f64 = 0.99;

/// Box eigenstate held between walls, then released into free space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxRelease {
    /// Eigen-index n, with k = nπ/L.
    pub k_mode: usize,
    /// Box `(-L/2, L/2)`.
    pub wall_gap: f64,
    pub box_points: usize,
    /// Free-flight grid `(-half_width, half_width)`, same spacing as the box.
    pub release_half_width: f64,
    pub release_points: usize,
    pub t_release: f64,
    pub hold_steps: usize,
    pub t_final: f64,
    /// Guidance frames during free flight; a multiple of ten.
    pub flight_frames: usize,
    /// Stored frames during free flight.
    pub flight_snapshots: usize,
}

impl Default for BoxRelease {
    fn default() -> Self {
        Self {
            k_mode: 800,
            wall_gap: 1.0,
            box_points: 8000,
            release_half_width: 4.096,
            release_points: 65536,
            t_release: 1.0e-4,
            hold_steps: 50,
            t_final: 9.0e-4,
            flight_frames: 4000,
            flight_snapshots: 4,
        }
    }
}

impl BoxRelease {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.k_mode == 0 {
            return Err(param("k_mode", "must be at least 1"));
        }
        positive("wall_gap", self.wall_gap)?;
        positive("release_half_width", self.release_half_width)?;
        positive("t_release", self.t_release)?;
        positive("t_final", self.t_final)?;
        if self.t_final <= self.t_release {
            return Err(param("t_final", "must exceed t_release"));
        }
        if self.box_points < 2 * self.k_mode {
            return Err(param("box_points", "need at least two points per half wavelength"));
        }
        if !self.release_points.is_power_of_two() {
            return Err(param("release_points", "must be a power of two"));
        }
        if self.hold_steps < 2 {
            return Err(param("hold_steps", "must be at least 2"));
        }
        if self.flight_frames == 0 || self.flight_frames % 10 != 0 {
            return Err(param("flight_frames", "must be a positive multiple of 10"));
        }
        if self.flight_snapshots == 0 || self.flight_frames % self.flight_snapshots != 0 {
            return Err(param("flight_snapshots", "must divide flight_frames"));
        }
        if 2.0 * self.release_half_width <= self.wall_gap {
            return Err(param("release_half_width", "free-flight grid must contain the box"));
        }
        Ok(())
    }

    fn grids(&self) -> Result<(Grid, Grid), ScenarioError> {
        let half = 0.5 * self.wall_gap;
        let boxed = make_grid(&[(-half, half)], &[self.box_points])?;
        let free = make_grid(&[(-self.release_half_width, self.release_half_width)], &[self.release_points])?;
        Ok((boxed, free))
    }

    /// `sin(k(x + L/2))`, a standing wave `∝ e^{ikx} − e^{−ikx}` up to phase.
    pub fn eigenstate(&self, grid: &Grid) -> Result<WaveFunction, ScenarioError> {
        let k = self.wavenumber();
        let half = 0.5 * self.wall_gap;
        let psi = WaveFunction::from_fn(grid, 0.0, |q| Complex64::new((k * (q[0] + half)).sin(), 0.0))?;
        Ok(psi.normalize()?)
    }

    pub fn wavenumber(&self) -> f64 {
        self.k_mode as f64 * PI / self.wall_gap
    }

    pub fn speed(&self, ctx: &Context) -> f64 {
        ctx.physics.hbar * self.wavenumber() / ctx.physics.mass
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let (boxed, free) = self.grids()?;
        let h = boxed.axis(0).spacing();
        if (free.axis(0).spacing() - h).abs() > 1e-12 * h {
            return Err(param("release_points", "free-flight spacing must equal the box spacing"));
        }
        let front = 0.5 * self.wall_gap + self.speed(ctx) * (self.t_final - self.t_release);
        if front + self.wall_gap > self.release_half_width {
            return Err(param(
                "release_half_width",
                format!("packet front reaches {front:.4}; the domain must extend a box width beyond it"),
            ));
        }
        let sys = ParticleSystem::new(vec![ctx.physics.mass], vec![1], ctx.physics.hbar)?;
        let cfg = manual_recording(&ctx.integrator);
        let mut ds = Dataset::default();

        let mut psi = self.eigenstate(&boxed)?;
        ds.insert_frame(snapshot_name(0), psi.clone());
        let samples = sample_equilibrium(&psi, ctx.n, ctx.seed)?;
        let mut integ = EnsembleIntegrator::new(&samples.configurations, &sys, Boundary::DirichletZero, &cfg)?;
        let hold_dt = self.t_release / self.hold_steps as f64;
        let mut hold = Propagator::new(&boxed, &sys, &Potential::Free, &PropagatorConfig::implicit_dirichlet(hold_dt))?;
        integ.push_frame(&psi)?;
        for j in 1..=self.hold_steps {
            hold.step(&mut psi)?;
            integ.push_frame(&psi)?;
            if j == self.hold_steps / 2 {
                integ.record();
            }
        }
        integ.record();
        let t_release = psi.time();

        let mut psi = release_walls(&psi, &free)?;
        integ.set_boundary(Boundary::Periodic);
        integ.push_frame(&psi)?;
        ds.insert_frame(snapshot_name(1), psi.clone());
        let flight_dt = (self.t_final - self.t_release) / self.flight_frames as f64;
        let mut flight = Propagator::new(&free, &sys, &Potential::Free, &PropagatorConfig::spectral(flight_dt))?;
        let late_frame = self.flight_frames - self.flight_frames / 10;
        let snap_every = self.flight_frames / self.flight_snapshots;
        let mut t_late = f64::NAN;
        for j in 1..=self.flight_frames {
            flight.step(&mut psi)?;
            integ.push_frame(&psi)?;
            if j == late_frame {
                integ.record();
                t_late = psi.time();
            }
            if j % snap_every == 0 {
                integ.record();
                ds.insert_frame(snapshot_name(1 + j / snap_every), psi.clone());
            }
        }
        let t_end = psi.time();
        let ensemble = integ.finish()?;
        ds.insert_table("trajectories", ensemble_table(&ensemble));
        ds.insert_table(
            "schedule",
            scalar_table(&[
                ("t_release", t_release),
                ("t_late", t_late),
                ("t_final", t_end),
                ("final_norm", psi.norm_sqr()),
            ]),
        );
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let ensemble = ds.ensemble("trajectories")?;
        let t_release = ds.value("schedule", "t_release")?;
        let t_late = ds.value("schedule", "t_late")?;
        let t_end = ds.value("schedule", "t_final")?;
        let v = self.speed(ctx);
        let h = self.wall_gap / self.box_points as f64;

        let hold = ensemble
            .trajectories
            .iter()
            .flat_map(|tr| {
                let x0 = tr.initial().coords[0];
                tr.samples.iter().filter(|c| c.time <= t_release).map(move |c| (c.coords[0] - x0).abs())
            })
            .fold(0.0, f64::max);

        let at = |tr: &Trajectory, t: f64| tr.samples.iter().find(|c| c.time == t).map(|c| c.coords[0]);
        let (mut within, mut total, mut mismatches, mut right, mut classified) = (0usize, 0usize, 0usize, 0usize, 0usize);
        for tr in ensemble.completed() {
            let (Some(a), Some(b)) = (at(tr, t_late), at(tr, t_end)) else { continue };
            let speed = (b - a) / (t_end - t_late);
            total += 1;
            if (speed.abs() - v).abs() <= SPEED_TOLERANCE * v {
                within += 1;
            }
            let x0 = tr.initial().coords[0];
            if speed > 0.0 {
                right += 1;
            }
            classified += 1;
            if x0.abs() > h && (x0 > 0.0) != (speed > 0.0) {
                mismatches += 1;
            }
        }
        let total = total.max(1) as f64;
        let n = classified.max(1) as f64;
        let right_fraction = right as f64 / n;
        let mut checks = vec![
            Check::at_most("hold_max_displacement", hold, 1e-6),
            Check::at_least("late_speed_within_2pct_fraction", within as f64 / total, MIN_SPEED_FRACTION),
            Check::at_most("side_sign_mismatches", mismatches as f64, 0.0),
            Check::at_most("right_fraction_deviation", (right_fraction - 0.5).abs(), 3.0 * (0.25 / n).sqrt()),
        ];
        checks.extend(equivariance_checks(ds, &ensemble, ctx.calibration_seed())?);
        checks.push(node_check(&ensemble));
        Ok(checks)
    }
}
