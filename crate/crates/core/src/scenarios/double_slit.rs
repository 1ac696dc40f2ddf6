use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    equivariance_checks, manual_recording, node_check, param, positive, scalar_table, snapshot_name, whole_steps, Check,
    Context, Dataset, ScenarioError,
};
use crate::equilibrium::{equivariance_test_density, sample_equilibrium, StatisticKind, MIN_TEST_SAMPLES};
use crate::grid::{make_grid, Grid, ParticleSystem, WaveFunction};
use crate::guidance::{EnsembleIntegrator, TrajectoryStatus};
use crate::io::{ensemble_table, Table};
use crate::measurement::pointer_packet;
use crate::propagator::{Boundary, Potential, Propagator, PropagatorConfig, SlitBarrier};

const MAX_AMBIGUOUS_FRACTION: f64 = 0.005;
const MIN_COHERENT_VISIBILITY: f64 = 0.5;
const MAX_WHICH_WAY_VISIBILITY: f64 = 0.05;

/// Two-slit interference in the plane: axis 0 is the flight direction `x`,
/// axis 1 the transverse direction `y`; the barrier sits at `x = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleSlit {
    /// Square grid `(-half_width, half_width)²`.
    pub half_width: f64,
    pub points: usize,
    /// Distance between the slit centres.
    pub slit_separation: f64,
    pub slit_width: f64,
    pub barrier_thickness: f64,
    pub barrier_height: f64,
    pub packet_x0: f64,
    pub packet_k0: f64,
    pub packet_sigma_x: f64,
    pub packet_sigma_y: f64,
    /// Screen plane `x = screen_distance` behind the barrier.
    pub screen_distance: f64,
    pub dt: f64,
    pub t_final: f64,
    pub frame_stride: usize,
    pub snapshot_interval: f64,
    /// Pointer target separation of the which-way marker, in pointer widths.
    pub pointer_separation: f64,
}

impl Default for DoubleSlit {
    fn default() -> Self {
        Self {
            half_width: 32.0,
            points: 512,
            slit_separation: 4.0,
            slit_width: 0.7,
            barrier_thickness: 0.5,
            barrier_height: 1000.0,
            packet_x0: -6.0,
            packet_k0: 6.0,
            packet_sigma_x: 1.5,
            packet_sigma_y: 2.5,
            screen_distance: 12.0,
            dt: 0.005,
            t_final: 4.0,
            frame_stride: 2,
            snapshot_interval: 1.0,
            pointer_separation: 24.0,
        }
    }
}

impl DoubleSlit {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("half_width", self.half_width),
            ("slit_separation", self.slit_separation),
            ("slit_width", self.slit_width),
            ("barrier_thickness", self.barrier_thickness),
            ("barrier_height", self.barrier_height),
            ("packet_k0", self.packet_k0),
            ("packet_sigma_x", self.packet_sigma_x),
            ("packet_sigma_y", self.packet_sigma_y),
            ("screen_distance", self.screen_distance),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("snapshot_interval", self.snapshot_interval),
        ] {
            positive(name, v)?;
        }
        if !(self.pointer_separation >= 0.0) {
            return Err(param("pointer_separation", "must be non-negative"));
        }
        if !self.points.is_power_of_two() || self.points < 4 {
            return Err(param("points", "must be a power of two"));
        }
        if self.slit_width >= self.slit_separation {
            return Err(param("slit_width", "slits must not overlap"));
        }
        if !(self.packet_x0 < 0.0 && self.packet_x0 > -self.half_width) {
            return Err(param("packet_x0", "packet must start inside the grid, before the barrier"));
        }
        if self.screen_distance >= self.half_width {
            return Err(param("screen_distance", "screen must lie inside the grid"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        let steps = whole_steps("t_final", self.t_final, self.dt)?;
        if steps % self.frame_stride != 0 {
            return Err(param("frame_stride", "must divide the number of steps"));
        }
        let snap = whole_steps("snapshot_interval", self.snapshot_interval, self.dt * self.frame_stride as f64)?;
        if (steps / self.frame_stride) % snap != 0 {
            return Err(param("snapshot_interval", "must divide t_final"));
        }
        Ok(())
    }

    fn grid(&self) -> Result<Grid, ScenarioError> {
        let w = self.half_width;
        Ok(make_grid(&[(-w, w), (-w, w)], &[self.points, self.points])?)
    }

    pub fn barrier(&self, slits: &[f64]) -> Potential {
        Potential::SlitBarrier(SlitBarrier {
            axis: 0,
            transverse_axis: 1,
            position: 0.0,
            thickness: self.barrier_thickness,
            slit_centers: slits.to_vec(),
            slit_widths: vec![self.slit_width; slits.len()],
            height: self.barrier_height,
            smoothing: None,
        })
    }

    pub fn initial_state(&self, grid: &Grid) -> Result<WaveFunction, ScenarioError> {
        let (x0, k0, sx, sy) = (self.packet_x0, self.packet_k0, self.packet_sigma_x, self.packet_sigma_y);
        let psi = WaveFunction::from_fn(grid, 0.0, |q| {
            let env = (-(q[0] - x0).powi(2) / (4.0 * sx * sx) - q[1] * q[1] / (4.0 * sy * sy)).exp();
            Complex64::from_polar(env, k0 * q[0])
        })?;
        Ok(psi.normalize()?)
    }

    /// Pointer-state overlap of the which-way marker.
    pub fn pointer_overlap(&self) -> Result<f64, ScenarioError> {
        let width = 0.5;
        let half = 0.5 * self.pointer_separation * width;
        let extent = half + 10.0 * width;
        let grid = make_grid(&[(-extent, extent)], &[1024])?;
        let a = pointer_packet(&grid, -half, width);
        let b = pointer_packet(&grid, half, width);
        Ok(a.inner_product(&b)?.re)
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let grid = self.grid()?;
        let sys = ParticleSystem::new(vec![ctx.physics.mass], vec![2], ctx.physics.hbar)?;
        let d = 0.5 * self.slit_separation;
        let cfg_prop = PropagatorConfig::spectral(self.dt);
        let mut prop = Propagator::new(&grid, &sys, &self.barrier(&[-d, d]), &cfg_prop)?;
        let mut upper = Propagator::new(&grid, &sys, &self.barrier(&[d]), &cfg_prop)?;
        let mut psi = self.initial_state(&grid)?;
        let mut psi_upper = psi.clone();

        let samples = sample_equilibrium(&psi, ctx.n, ctx.seed)?;
        let cfg = manual_recording(&ctx.integrator);
        let mut integ = EnsembleIntegrator::new(&samples.configurations, &sys, Boundary::Periodic, &cfg)?;
        integ.push_frame(&psi)?;
        integ.record();

        let n = samples.configurations.len();
        let mut crossing: Vec<Option<(f64, f64)>> = vec![None; n];
        let mut axis_crossings = vec![0usize; n];
        let mut prev = integ.positions();

        let mut ds = Dataset::default();
        ds.insert_frame(snapshot_name(0), psi.clone());
        let frames = whole_steps("t_final", self.t_final, self.dt)? / self.frame_stride;
        let snap = whole_steps("snapshot_interval", self.snapshot_interval, self.dt * self.frame_stride as f64)?;
        for j in 1..=frames {
            for _ in 0..self.frame_stride {
                prop.step(&mut psi)?;
                upper.step(&mut psi_upper)?;
            }
            integ.push_frame(&psi)?;
            let now = integ.positions();
            let statuses = integ.statuses();
            for i in 0..n {
                if statuses[i].is_aborted() {
                    continue;
                }
                let (a, b) = (&prev[i], &now[i]);
                if a.coords[1] * b.coords[1] < 0.0 {
                    axis_crossings[i] += 1;
                }
                if crossing[i].is_none() && a.coords[0] < 0.0 && b.coords[0] >= 0.0 {
                    let f = -a.coords[0] / (b.coords[0] - a.coords[0]);
                    let t = a.time + f * (b.time - a.time);
                    let y = a.coords[1] + f * (b.coords[1] - a.coords[1]);
                    crossing[i] = Some((t, y));
                }
            }
            prev = now;
            if j % snap == 0 {
                integ.record();
                ds.insert_frame(snapshot_name(j / snap), psi.clone());
            }
        }
        let ensemble = integ.finish()?;

        let mut table = Table::new(["trajectory_id", "crossed", "t_cross", "y_cross", "x_final", "y_final", "axis_crossings", "status"]);
        for (i, tr) in ensemble.trajectories.iter().enumerate() {
            let last = tr.last();
            let (crossed, t, y) = match crossing[i] {
                Some((t, y)) => (1i64, t, y),
                None => (0, f64::NAN, f64::NAN),
            };
            table.push(vec![
                (i as i64).into(),
                crossed.into(),
                t.into(),
                y.into(),
                last.coords[0].into(),
                last.coords[1].into(),
                (axis_crossings[i] as i64).into(),
                tr.status.as_str().into(),
            ]);
        }
        ds.insert_table("trajectories", ensemble_table(&ensemble));
        ds.insert_table("crossings", table);
        ds.insert_frame("upper_slit_final", psi_upper);
        ds.insert_table(
            "summary",
            scalar_table(&[("pointer_overlap", self.pointer_overlap()?), ("final_norm", psi.norm_sqr())]),
        );
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let ensemble = ds.ensemble("trajectories")?;
        let table = ds.table("crossings")?;
        let crossed = table.f64_column("crossed")?;
        let y_cross = table.f64_column("y_cross")?;
        let x_final = table.f64_column("x_final")?;
        let y_final = table.f64_column("y_final")?;
        let axis = table.f64_column("axis_crossings")?;
        let status = table.text_column("status")?;
        let final_psi = ds.frames_with_prefix("psi_").last().map(|(_, p)| p.clone()).ok_or_else(|| {
            ScenarioError::Dataset("no stored frames".into())
        })?;
        let h = final_psi.grid().axis(1).spacing();

        let (mut counter, mut ambiguous) = (0usize, 0usize);
        let mut screen_y = Vec::new();
        for i in 0..crossed.len() {
            if status[i] != TrajectoryStatus::Completed.as_str() || crossed[i] == 0.0 {
                continue;
            }
            if y_cross[i].abs() <= h || y_final[i].abs() <= h {
                ambiguous += 1;
                continue;
            }
            if (y_cross[i] > 0.0) != (y_final[i] > 0.0) {
                counter += 1;
            }
            if x_final[i] >= self.screen_distance {
                screen_y.push(vec![y_final[i]]);
            }
        }
        let total_axis: f64 = axis.iter().sum();
        let n = crossed.len().max(1) as f64;
        let mut checks = vec![
            Check::at_most("slit_side_counterexamples", counter as f64, 0.0),
            Check::at_most("axis_ambiguous_fraction", ambiguous as f64 / n, MAX_AMBIGUOUS_FRACTION),
            Check::at_most("symmetry_axis_crossings", total_axis, 0.0),
        ];

        let (ygrid, coherent) = screen_marginal(&final_psi, self.screen_distance)?;
        checks.push(Check::at_least("screen_samples", screen_y.len() as f64, MIN_TEST_SAMPLES as f64));
        if screen_y.len() >= MIN_TEST_SAMPLES {
            let r = equivariance_test_density(
                &screen_y,
                &ygrid,
                &coherent,
                StatisticKind::TotalVariationBinned,
                None,
                ctx.calibration_seed(),
            )?;
            checks.push(Check::at_most("screen_equivariance_tv", r.value, r.null_bound));
        }

        let window = self.fringe_half_spacing();
        checks.push(Check::at_least("coherent_visibility", visibility(&ygrid, &coherent, window), MIN_COHERENT_VISIBILITY));
        let upper = ds.frame("upper_slit_final")?;
        let overlap = ds.value("summary", "pointer_overlap")?;
        let marked = which_way_marginal(upper, self.screen_distance, overlap)?;
        checks.push(Check::at_most("which_way_visibility", visibility(&ygrid, &marked, window), MAX_WHICH_WAY_VISIBILITY));

        checks.extend(equivariance_checks(ds, &ensemble, ctx.calibration_seed())?);
        checks.push(node_check(&ensemble));
        Ok(checks)
    }

    /// Half the far-field fringe spacing `πD/(k₀d)`.
    pub fn fringe_half_spacing(&self) -> f64 {
        std::f64::consts::PI * self.screen_distance / (self.packet_k0 * self.slit_separation)
    }
}

/// Transverse density summed over `x ≥ x_screen`.
pub fn screen_marginal(psi: &WaveFunction, x_screen: f64) -> Result<(Grid, Vec<f64>), ScenarioError> {
    let grid = psi.grid();
    let rho = psi.density();
    Ok((grid.select(&[1]), marginal(grid, x_screen, |i| rho[i])))
}

fn marginal(grid: &Grid, x_screen: f64, value: impl Fn(usize) -> f64) -> Vec<f64> {
    let (nx, ny) = (grid.axis(0).points, grid.axis(1).points);
    let mut out = vec![0.0; ny];
    for i in (0..nx).filter(|&i| grid.axis(0).coord(i) >= x_screen) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += value(grid.flat_index(&[i, j]));
        }
    }
    out
}

/// Screen marginal when the slit passage is recorded by a pointer: the
/// upper-slit wave `U`, its mirror image `D`, and interference damped by the
/// pointer overlap.
pub fn which_way_marginal(upper: &WaveFunction, x_screen: f64, pointer_overlap: f64) -> Result<Vec<f64>, ScenarioError> {
    let grid = upper.grid();
    let ny = grid.axis(1).points;
    let amp = upper.amplitudes();
    Ok(marginal(grid, x_screen, |k| {
        let (i, j) = (k / ny, k % ny);
        let u = amp[k];
        let d = amp[grid.flat_index(&[i, ny - 1 - j])];
        u.norm_sqr() + d.norm_sqr() + 2.0 * pointer_overlap * (u.conj() * d).re
    }))
}

/// `(max − min)/(max + min)` of a marginal over `|y| ≤ half_window`.
pub fn visibility(ygrid: &Grid, marginal: &[f64], half_window: f64) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (j, m) in marginal.iter().enumerate() {
        if ygrid.axis(0).coord(j).abs() <= half_window {
            lo = lo.min(*m);
            hi = hi.max(*m);
        }
    }
    if hi + lo > 0.0 {
        (hi - lo) / (hi + lo)
    } else {
        0.0
    }
}
