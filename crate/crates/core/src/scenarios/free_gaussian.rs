use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    equivariance_checks, manual_recording, node_check, param, positive, scalar_table, snapshot_name, whole_steps, Check,
    Context, Dataset, ScenarioError,
};
use crate::equilibrium::sample_equilibrium;
use crate::grid::{make_grid, Configuration, ParticleSystem, WaveFunction};
use crate::guidance::EnsembleIntegrator;
use crate::io::ensemble_table;
use crate::propagator::{Boundary, Potential, Propagator, PropagatorConfig};

/// Spreading free Gaussian compared with its closed-form trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeGaussian {
    pub sigma0: f64,
    /// The grid spans `(-half_width, half_width)`.
    pub half_width: f64,
    pub points: usize,
    pub dt: f64,
    pub t_final: f64,
    /// Propagator steps between guidance frames.
    pub frame_stride: usize,
    pub record_interval: f64,
    pub snapshot_interval: f64,
    /// Extra single trajectories, as multiples of `sigma0`.
    pub probes: Vec<f64>,
}

impl Default for FreeGaussian {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            half_width: 48.0,
            points: 4096,
            dt: 0.005,
            t_final: 4.0,
            frame_stride: 2,
            record_interval: 0.5,
            snapshot_interval: 1.0,
            probes: vec![0.0, 1.0],
        }
    }
}

/// Width of `|ψ|²` at time `t`.
pub fn sigma_at(sigma0: f64, hbar_over_m: f64, t: f64) -> f64 {
    let r = hbar_over_m * t / (2.0 * sigma0 * sigma0);
    sigma0 * (1.0 + r * r).sqrt()
}

struct Schedule {
    steps: usize,
    record_every: usize,
    snapshot_every: usize,
}

impl FreeGaussian {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("sigma0", self.sigma0)?;
        positive("half_width", self.half_width)?;
        positive("dt", self.dt)?;
        positive("t_final", self.t_final)?;
        positive("record_interval", self.record_interval)?;
        positive("snapshot_interval", self.snapshot_interval)?;
        if self.points < 2 || !self.points.is_power_of_two() {
            return Err(param("points", "must be a power of two"));
        }
        if self.frame_stride == 0 {
            return Err(param("frame_stride", "must be at least 1"));
        }
        self.schedule().map(|_| ())
    }

    fn schedule(&self) -> Result<Schedule, ScenarioError> {
        let steps = whole_steps("t_final", self.t_final, self.dt)?;
        if steps % self.frame_stride != 0 {
            return Err(param("frame_stride", "must divide the number of steps"));
        }
        let frame_dt = self.dt * self.frame_stride as f64;
        let record_every = whole_steps("record_interval", self.record_interval, frame_dt)?;
        let snapshot_every = whole_steps("snapshot_interval", self.snapshot_interval, frame_dt)?;
        if snapshot_every % record_every != 0 {
            return Err(param("snapshot_interval", "must be a multiple of record_interval"));
        }
        Ok(Schedule { steps, record_every, snapshot_every })
    }

    pub fn initial_state(&self, grid: &crate::grid::Grid) -> Result<WaveFunction, ScenarioError> {
        let s = self.sigma0;
        let psi = WaveFunction::from_fn(grid, 0.0, |q| Complex64::new((-q[0] * q[0] / (4.0 * s * s)).exp(), 0.0))?;
        Ok(psi.normalize()?)
    }

    pub(crate) fn simulate(&self, ctx: &Context) -> Result<Dataset, ScenarioError> {
        let sched = self.schedule()?;
        let hm = ctx.physics.hbar / ctx.physics.mass;
        let sigma_end = sigma_at(self.sigma0, hm, self.t_final);
        if 2.0 * self.half_width < 40.0 * sigma_end {
            return Err(param(
                "half_width",
                format!("domain must span at least 40 final widths ({:.3})", 40.0 * sigma_end),
            ));
        }
        let grid = make_grid(&[(-self.half_width, self.half_width)], &[self.points])?;
        let sys = ParticleSystem::new(vec![ctx.physics.mass], vec![1], ctx.physics.hbar)?;
        let mut psi = self.initial_state(&grid)?;
        let mut prop = Propagator::new(&grid, &sys, &Potential::Free, &PropagatorConfig::spectral(self.dt))?;

        let samples = sample_equilibrium(&psi, ctx.n, ctx.seed)?;
        let probes: Vec<Configuration> =
            self.probes.iter().map(|p| Configuration::new(vec![p * self.sigma0], 0.0)).collect();
        let cfg = manual_recording(&ctx.integrator);
        let mut ensemble = EnsembleIntegrator::new(&samples.configurations, &sys, Boundary::Periodic, &cfg)?;
        let mut probe = EnsembleIntegrator::new(&probes, &sys, Boundary::Periodic, &cfg)?;

        let mut ds = Dataset::default();
        let frames = sched.steps / self.frame_stride;
        for j in 0..=frames {
            if j > 0 {
                for _ in 0..self.frame_stride {
                    prop.step(&mut psi)?;
                }
            }
            ensemble.push_frame(&psi)?;
            probe.push_frame(&psi)?;
            if j % sched.record_every == 0 {
                ensemble.record();
                probe.record();
            }
            if j % sched.snapshot_every == 0 {
                ds.insert_frame(snapshot_name(j / sched.snapshot_every), psi.clone());
            }
        }
        let ensemble = ensemble.finish()?;
        let probe = probe.finish()?;
        ds.insert_table("trajectories", ensemble_table(&ensemble));
        ds.insert_table("probes", ensemble_table(&probe));
        ds.insert_table("summary", scalar_table(&[("final_norm", psi.norm_sqr()), ("v_max", ensemble.v_max)]));
        Ok(ds)
    }

    pub(crate) fn evaluate(&self, ctx: &Context, ds: &Dataset) -> Result<Vec<Check>, ScenarioError> {
        let hm = ctx.physics.hbar / ctx.physics.mass;
        let s0 = self.sigma0;
        let oracle = |x0: f64, t: f64| x0 * sigma_at(s0, hm, t) / s0;
        let ensemble = ds.ensemble("trajectories")?;

        let mut max_err = 0.0f64;
        for tr in ensemble.completed() {
            let x0 = tr.initial().coords[0];
            for c in &tr.samples {
                max_err = max_err.max((c.coords[0] - oracle(x0, c.time)).abs());
            }
        }
        let mut checks = vec![Check::at_most("oracle_max_error", max_err, 1e-3 * s0)];

        let finals: Vec<f64> = ensemble.completed().map(|tr| tr.last().coords[0]).collect();
        let t_end = ensemble.completed().next().map(|tr| tr.last().time).unwrap_or(self.t_final);
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = sigma_at(s0, hm, t_end).powi(2);
        let se = expected * (2.0 / (n - 1.0)).sqrt();
        checks.push(Check::at_most("final_variance_z", (var - expected).abs() / se, 3.0));

        let probes = ds.ensemble("probes")?;
        for (p, tr) in self.probes.iter().zip(&probes.trajectories) {
            let x0 = tr.initial().coords[0];
            let (name, bound) = if *p == 0.0 {
                ("probe_x0=0_max_abs".to_string(), 1e-9)
            } else {
                (format!("probe_x0={p}sigma_max_error"), 1e-3 * s0)
            };
            let err = tr.samples.iter().map(|c| (c.coords[0] - oracle(x0, c.time)).abs()).fold(0.0, f64::max);
            let err = if tr.status.is_aborted() { f64::INFINITY } else { err };
            checks.push(Check::at_most(name, err, bound));
        }

        checks.extend(equivariance_checks(ds, &ensemble, ctx.calibration_seed())?);
        checks.push(node_check(&ensemble));
        Ok(checks)
    }
}
