//! Guidance velocities and trajectory integration.

mod field;

pub use field::{velocity_field, velocity_field_spinor, GuidanceField, DEFAULT_NODE_EPSILON};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derivatives::{Boundary, FftNd, GradientMethod};
use crate::grid::{Configuration, Grid, GridError, ParticleSystem, WaveFunction};

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("configuration is within the node threshold (density {density:e} <= {threshold:e})")]
    NodeProximity { density: f64, threshold: f64 },
    #[error("configuration left the domain: {0}")]
    OutOfDomain(GridError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("spinor guidance needs at least 2 spin components, got {0}")]
    SpinorRequired(usize),
    #[error("frame at t = {time} breaks the uniform spacing {expected} (got {got})")]
    FrameSpacing { time: f64, expected: f64, got: f64 },
    #[error("frame times must increase (t = {time} after {previous})")]
    FrameOrder { time: f64, previous: f64 },
    #[error("no frames were supplied")]
    NoFrames,
    #[error("every trajectory aborted")]
    AllAborted,
    #[error("invalid permutation: {0}")]
    BadPermutation(String),
    #[error("invalid integrator configuration: {0}")]
    BadConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    AbortedNode,
    AbortedDomain,
}

impl TrajectoryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryStatus::Completed => "completed",
            TrajectoryStatus::AbortedNode => "aborted_node",
            TrajectoryStatus::AbortedDomain => "aborted_domain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "completed" => Some(TrajectoryStatus::Completed),
            "aborted_node" => Some(TrajectoryStatus::AbortedNode),
            "aborted_domain" => Some(TrajectoryStatus::AbortedDomain),
            _ => None,
        }
    }

    pub fn is_aborted(self) -> bool {
        self != TrajectoryStatus::Completed
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Recorded configurations; the last one is where the trajectory stopped.
    pub samples: Vec<Configuration>,
    pub status: TrajectoryStatus,
    /// Index of the initial point in the input ensemble.
    pub seed_index: usize,
    /// Largest speed component seen along the path.
    pub v_max: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &Configuration {
        &self.samples[0]
    }

    pub fn last(&self) -> &Configuration {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Recorded configuration closest in time to `t`.
    pub fn at_time(&self, t: f64) -> &Configuration {
        self.samples
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .expect("trajectory has at least one sample")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub v_max: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn count(&self, status: TrajectoryStatus) -> usize {
        self.trajectories.iter().filter(|t| t.status == status).count()
    }

    pub fn aborted_fraction(&self) -> f64 {
        let n = self.len().max(1) as f64;
        self.trajectories.iter().filter(|t| t.status.is_aborted()).count() as f64 / n
    }

    pub fn completed(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| t.status == TrajectoryStatus::Completed)
    }

    /// Positions of completed trajectories at the recorded time nearest `t`.
    pub fn positions_at(&self, t: f64) -> Vec<Vec<f64>> {
        self.completed().map(|tr| tr.at_time(t).coords.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    Rk4Lockstep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Trilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: IntegrationMethod,
    /// Minimum RK4 substeps per frame interval; a substep is shortened further
    /// so that no RK stage moves a walker by more than one grid cell.
    pub substeps_per_frame: usize,
    pub node_epsilon: f64,
    pub interpolation: Interpolation,
    /// Keep every n-th frame in the trajectory record (the final one is always kept).
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: IntegrationMethod::Rk4Lockstep,
            substeps_per_frame: 4,
            node_epsilon: DEFAULT_NODE_EPSILON,
            interpolation: Interpolation::Trilinear,
            record_every: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        if self.substeps_per_frame == 0 {
            return Err(GuidanceError::BadConfig("substeps_per_frame must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(GuidanceError::BadConfig("record_every must be at least 1".into()));
        }
        if !(self.node_epsilon >= 0.0 && self.node_epsilon < 1.0) {
            return Err(GuidanceError::BadConfig("node_epsilon must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Walker {
    /// Position in the caller's initial list.
    index: usize,
    q: Vec<f64>,
    status: TrajectoryStatus,
    samples: Vec<Configuration>,
    v_max: f64,
}

/// Moves an ensemble through a stream of frames, holding only two at a time.
///
/// Frames must be pushed in increasing time with a uniform spacing. A frame
/// with the same time as its predecessor replaces it without advancing, which
/// is how a re-embedding onto a new grid is fed in; the spacing may change
/// after such a frame.
pub struct EnsembleIntegrator {
    sys: ParticleSystem,
    boundary: Boundary,
    cfg: IntegratorConfig,
    walkers: Vec<Walker>,
    prev: Option<GuidanceField>,
    spacing: Option<f64>,
    frames_seen: usize,
    fft: Option<(Grid, FftNd)>,
}

/// Cap on cell-limited substeps, as a multiple of `substeps_per_frame`.
const MAX_SUBSTEP_FACTOR: usize = 64;
/// Shortening attempts for one substep.
const MAX_RETRIES: usize = 8;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl EnsembleIntegrator {
    pub fn new(
        initial: &[Configuration],
        sys: &ParticleSystem,
        boundary: Boundary,
        cfg: &IntegratorConfig,
    ) -> Result<Self, GuidanceError> {
        cfg.validate()?;
        let d = sys.total_dims();
        let mut walkers = initial
            .iter()
            .enumerate()
            .map(|(index, c)| {
                if c.dims() != d {
                    return Err(GuidanceError::Grid(GridError::ConfigurationDims { got: c.dims(), expected: d }));
                }
                Ok(Walker {
                    index,
                    q: c.coords.clone(),
                    status: TrajectoryStatus::Completed,
                    samples: Vec::new(),
                    v_max: 0.0,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        // spatial order keeps neighbouring walkers on neighbouring grid data
        walkers.sort_by(|a, b| {
            a.q.iter().zip(&b.q).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(Self {
            sys: sys.clone(),
            boundary,
            cfg: cfg.clone(),
            walkers,
            prev: None,
            spacing: None,
            frames_seen: 0,
            fft: None,
        })
    }

    /// Switch the boundary used for subsequent frames.
    pub fn set_boundary(&mut self, boundary: Boundary) {
        self.boundary = boundary;
    }

    pub fn current_time(&self) -> Option<f64> {
        self.prev.as_ref().map(|f| f.time())
    }

    /// Current positions of all walkers, aborted ones frozen where they stopped.
    pub fn positions(&self) -> Vec<Configuration> {
        let t = self.current_time().unwrap_or(0.0);
        let mut out = vec![Configuration::new(Vec::new(), t); self.walkers.len()];
        for w in &self.walkers {
            out[w.index].coords = w.q.clone();
        }
        out
    }

    pub fn statuses(&self) -> Vec<TrajectoryStatus> {
        let mut out = vec![TrajectoryStatus::Completed; self.walkers.len()];
        for w in &self.walkers {
            out[w.index] = w.status;
        }
        out
    }

    pub fn push_frame(&mut self, psi: &WaveFunction) -> Result<(), GuidanceError> {
        let method = GradientMethod::for_boundary(self.boundary);
        let fft = if method == GradientMethod::Spectral {
            if self.fft.as_ref().is_none_or(|(g, _)| g != psi.grid()) {
                self.fft = Some((psi.grid().clone(), FftNd::new(psi.grid())));
            }
            self.fft.as_ref().map(|(_, f)| f)
        } else {
            None
        };
        let field = GuidanceField::build(psi, &self.sys, self.boundary, method, fft)?;
        let eps = self.cfg.node_epsilon;
        let Some(prev) = self.prev.take() else {
            let t = field.time();
            self.walkers.par_iter_mut().for_each(|w| {
                match field.velocity(&w.q, eps) {
                    Ok(v) => w.v_max = max_abs(&v),
                    Err(GuidanceError::OutOfDomain(_)) => w.status = TrajectoryStatus::AbortedDomain,
                    Err(_) => w.status = TrajectoryStatus::AbortedNode,
                }
                w.samples.push(Configuration::new(w.q.clone(), t));
            });
            self.prev = Some(field);
            self.frames_seen = 1;
            return Ok(());
        };
        let dt = field.time() - prev.time();
        if dt == 0.0 {
            self.spacing = None;
            self.prev = Some(field);
            return Ok(());
        }
        if dt < 0.0 {
            return Err(GuidanceError::FrameOrder { time: field.time(), previous: prev.time() });
        }
        match self.spacing {
            Some(h) if (dt - h).abs() > 1e-9 * h => {
                return Err(GuidanceError::FrameSpacing { time: field.time(), expected: h, got: dt });
            }
            Some(_) => {}
            None => self.spacing = Some(dt),
        }
        let n_sub = self.cfg.substeps_per_frame;
        let h_nominal = dt / n_sub as f64;
        let cell = field.min_spacing().min(prev.min_spacing());
        let max_substeps = MAX_SUBSTEP_FACTOR * n_sub;
        let d = self.sys.total_dims();
        let velocity = |q: &[f64], lambda: f64| -> Result<[f64; 3], GuidanceError> {
            if lambda <= 0.0 {
                return prev.velocity(q, eps);
            }
            if lambda >= 1.0 {
                return field.velocity(q, eps);
            }
            let a = prev.velocity(q, eps)?;
            let b = field.velocity(q, eps)?;
            let mut v = [0.0; 3];
            for k in 0..d {
                v[k] = (1.0 - lambda) * a[k] + lambda * b[k];
            }
            Ok(v)
        };
        self.walkers.par_iter_mut().filter(|w| w.status == TrajectoryStatus::Completed).for_each(|w| {
            let mut tmp = [0.0; 3];
            let mut lambda = 0.0;
            let mut taken = 0;
            while lambda < 1.0 {
                let step = (|| {
                    let k1 = velocity(&w.q, lambda)?;
                    let remaining = (1.0 - lambda) * dt;
                    let mut h = h_nominal.min(remaining);
                    let mut kmax = max_abs(&k1[..d]);
                    let mut retries = 0;
                    loop {
                        if kmax * h > cell && taken < max_substeps {
                            h = cell / kmax;
                        }
                        let last = h >= remaining * (1.0 - 1e-12);
                        if last {
                            h = remaining;
                        }
                        let lm = lambda + 0.5 * h / dt;
                        let l1 = if last { 1.0 } else { lambda + h / dt };
                        for i in 0..d {
                            tmp[i] = w.q[i] + 0.5 * h * k1[i];
                        }
                        let k2 = velocity(&tmp[..d], lm)?;
                        for i in 0..d {
                            tmp[i] = w.q[i] + 0.5 * h * k2[i];
                        }
                        let k3 = velocity(&tmp[..d], lm)?;
                        for i in 0..d {
                            tmp[i] = w.q[i] + h * k3[i];
                        }
                        let k4 = velocity(&tmp[..d], l1)?;
                        let stage_max = [k2, k3, k4].iter().fold(kmax, |m, k| m.max(max_abs(&k[..d])));
                        // a stage that would carry the walker past a cell means the step straddles a
                        // near-node; retry shorter
                        if stage_max * h > cell * (1.0 + 1e-9) && retries < MAX_RETRIES && taken < max_substeps {
                            kmax = stage_max;
                            retries += 1;
                            continue;
                        }
                        for i in 0..d {
                            w.q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                        }
                        return Ok::<(f64, f64), GuidanceError>((stage_max, l1));
                    }
                })();
                match step {
                    Ok((vm, next)) => {
                        w.v_max = w.v_max.max(vm);
                        lambda = next;
                        taken += 1;
                    }
                    Err(e) => {
                        w.status = match e {
                            GuidanceError::OutOfDomain(_) => TrajectoryStatus::AbortedDomain,
                            _ => TrajectoryStatus::AbortedNode,
                        };
                        break;
                    }
                }
            }
            if w.status == TrajectoryStatus::Completed && !field.grid().contains(&w.q) {
                w.status = TrajectoryStatus::AbortedDomain;
            }
        });
        let index = self.frames_seen;
        self.frames_seen += 1;
        self.prev = Some(field);
        if index % self.cfg.record_every == 0 {
            self.record();
        }
        Ok(())
    }

    /// Record the current positions, unless this time is already recorded.
    pub fn record(&mut self) {
        let Some(t) = self.current_time() else { return };
        for w in &mut self.walkers {
            if w.samples.last().is_none_or(|c| c.time != t) {
                w.samples.push(Configuration::new(w.q.clone(), t));
            }
        }
    }

    pub fn finish(mut self) -> Result<Ensemble, GuidanceError> {
        if self.prev.is_none() {
            return Err(GuidanceError::NoFrames);
        }
        self.record();
        if !self.walkers.is_empty() && self.walkers.iter().all(|w| w.status.is_aborted()) {
            return Err(GuidanceError::AllAborted);
        }
        self.walkers.sort_by_key(|w| w.index);
        let trajectories: Vec<Trajectory> = self
            .walkers
            .into_iter()
            .map(|w| Trajectory { samples: w.samples, status: w.status, seed_index: w.index, v_max: w.v_max })
            .collect();
        let v_max = trajectories.iter().map(|t| t.v_max).fold(0.0, f64::max);
        Ok(Ensemble { trajectories, v_max })
    }
}

/// Integrate `initial` through stored `frames` (uniformly spaced in time).
pub fn integrate_ensemble(
    initial: &[Configuration],
    frames: &[WaveFunction],
    sys: &ParticleSystem,
    boundary: Boundary,
    cfg: &IntegratorConfig,
) -> Result<Ensemble, GuidanceError> {
    if frames.is_empty() {
        return Err(GuidanceError::NoFrames);
    }
    let mut integ = EnsembleIntegrator::new(initial, sys, boundary, cfg)?;
    for f in frames {
        integ.push_frame(f)?;
    }
    integ.finish()
}

/// Relabel particles: particle `i` of the result is particle `perm[i]` of `q`.
pub fn permute_labels(q: &Configuration, sys: &ParticleSystem, perm: &[usize]) -> Result<Configuration, GuidanceError> {
    let n = sys.n_particles();
    if perm.len() != n {
        return Err(GuidanceError::BadPermutation(format!("expected {n} entries, got {}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(GuidanceError::BadPermutation(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    for (i, &p) in perm.iter().enumerate() {
        if sys.masses()[i] != sys.masses()[p] || sys.dims_per_particle()[i] != sys.dims_per_particle()[p] {
            return Err(GuidanceError::BadPermutation(format!("particles {i} and {p} are not identical")));
        }
    }
    if q.dims() != sys.total_dims() {
        return Err(GuidanceError::Grid(GridError::ConfigurationDims { got: q.dims(), expected: sys.total_dims() }));
    }
    let map = sys.axis_map();
    let axis_of = |p: usize, c: usize| map.iter().position(|&(pp, cc)| pp == p && cc == c).expect("axis map is a bijection");
    let coords = map.iter().map(|&(p, c)| q.coords[axis_of(perm[p], c)]).collect();
    Ok(Configuration::new(coords, q.time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_trajectory_moves_uniformly() {
        let g = make_grid(&[(0.0, 2.0 * PI)], &[64]).unwrap();
        let sys = ParticleSystem::natural(1);
        let frames: Vec<WaveFunction> = (0..5)
            .map(|i| {
                let t = 0.1 * i as f64;
                WaveFunction::from_fn(&g, t, |q| Complex64::from_polar(1.0, q[0] - 0.5 * t)).unwrap()
            })
            .collect();
        let e = integrate_ensemble(&[Configuration::new(vec![1.0], 0.0)], &frames, &sys, Boundary::Periodic, &IntegratorConfig::default()).unwrap();
        let tr = &e.trajectories[0];
        assert_eq!(tr.status, TrajectoryStatus::Completed);
        assert_eq!(tr.samples.len(), 5);
        assert!((tr.last().coords[0] - 1.4).abs() < 1e-12);
        assert!((e.v_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exits_are_flagged_not_dropped() {
        let g = make_grid(&[(0.0, 2.0 * PI)], &[64]).unwrap();
        let sys = ParticleSystem::natural(1);
        let frames: Vec<WaveFunction> =
            (0..3).map(|i| WaveFunction::from_fn(&g, i as f64, |q| Complex64::from_polar(1.0, 2.0 * q[0])).unwrap()).collect();
        let init = [Configuration::new(vec![1.0], 0.0), Configuration::new(vec![6.0], 0.0)];
        let e = integrate_ensemble(&init, &frames, &sys, Boundary::Periodic, &IntegratorConfig::default()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e.trajectories[1].status, TrajectoryStatus::AbortedDomain);
        assert_eq!(e.trajectories[1].seed_index, 1);
    }

    #[test]
    fn uneven_frames_are_rejected() {
        let g = make_grid(&[(0.0, 1.0)], &[16]).unwrap();
        let sys = ParticleSystem::natural(1);
        let f = |t: f64| WaveFunction::from_fn(&g, t, |_| Complex64::new(1.0, 0.0)).unwrap();
        let r = integrate_ensemble(&[Configuration::new(vec![0.5], 0.0)], &[f(0.0), f(1.0), f(3.0)], &sys, Boundary::Periodic, &IntegratorConfig::default());
        assert!(matches!(r, Err(GuidanceError::FrameSpacing { .. })));
    }

    #[test]
    fn record_every_keeps_the_final_frame() {
        let g = make_grid(&[(0.0, 1.0)], &[16]).unwrap();
        let sys = ParticleSystem::natural(1);
        let frames: Vec<_> = (0..6).map(|i| WaveFunction::from_fn(&g, i as f64, |_| Complex64::new(1.0, 0.0)).unwrap()).collect();
        let cfg = IntegratorConfig { record_every: 2, ..Default::default() };
        let e = integrate_ensemble(&[Configuration::new(vec![0.5], 0.0)], &frames, &sys, Boundary::Periodic, &cfg).unwrap();
        let times: Vec<f64> = e.trajectories[0].samples.iter().map(|c| c.time).collect();
        assert_eq!(times, vec![0.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn permutation_swaps_particle_blocks() {
        let sys = ParticleSystem::new(vec![1.0, 1.0], vec![2, 2], 1.0).unwrap();
        let q = Configuration::new(vec![1.0, 2.0, 3.0, 4.0], 0.0);
        let p = permute_labels(&q, &sys, &[1, 0]).unwrap();
        assert_eq!(p.coords, vec![3.0, 4.0, 1.0, 2.0]);
        assert!(permute_labels(&q, &sys, &[0, 0]).is_err());
        let unequal = ParticleSystem::new(vec![1.0, 2.0], vec![1, 1], 1.0).unwrap();
        assert!(permute_labels(&Configuration::new(vec![0.0, 1.0], 0.0), &unequal, &[1, 0]).is_err());
    }
}
