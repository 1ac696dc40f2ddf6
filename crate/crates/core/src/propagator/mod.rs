//! Time evolution under the Schrödinger equation.
//!
//! Two backends share one interface: Strang split-step Fourier on periodic
//! power-of-two grids, and the implicit midpoint (Crank–Nicolson) scheme with
//! second-order finite differences, which also handles hard walls.

mod diagnostics;
mod potential;

pub use diagnostics::{continuity_residual, energy, probability_current, probability_current_with, ContinuityResidual};
pub use potential::{CouplingOperator, PointerCoupling, Potential, SlitBarrier, DEFAULT_BARRIER_HEIGHT};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::derivatives::Boundary;
use crate::derivatives::{second_derivative, wavenumbers, FftNd};
use crate::grid::{Grid, GridError, ParticleSystem, WaveFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("incompatible propagator configuration: {0}")]
    Incompatible(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("time step {dt} exceeds the split-step cap {cap} (0.5·m·h²/ħ)")]
    TimeStepTooLarge { dt: f64, cap: f64 },
    #[error("non-finite amplitudes after stepping to t = {time} (unstable run)")]
    NonFinite { time: f64 },
    #[error("time span {span} is not a whole number of steps of {dt}")]
    NonIntegralSpan { span: f64, dt: f64 },
    #[error("final time {t_final} precedes the wave function time {t_start}")]
    BackwardSpan { t_start: f64, t_final: f64 },
    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStalled { iterations: usize, residual: f64 },
    #[error("frame stride must be positive")]
    ZeroStride,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    SplitStepSpectral,
    ImplicitMidpointFd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    pub backend: Backend,
    pub dt: f64,
    pub boundary: Boundary,
}

impl PropagatorConfig {
    pub fn spectral(dt: f64) -> Self {
        Self { backend: Backend::SplitStepSpectral, dt, boundary: Boundary::Periodic }
    }

    pub fn implicit_dirichlet(dt: f64) -> Self {
        Self { backend: Backend::ImplicitMidpointFd, dt, boundary: Boundary::DirichletZero }
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), PropagatorError> {
        if !(self.dt.is_finite() && self.dt != 0.0) {
            return Err(PropagatorError::Incompatible(format!("dt must be finite and non-zero, got {}", self.dt)));
        }
        if self.backend == Backend::SplitStepSpectral {
            if self.boundary != Boundary::Periodic {
                return Err(PropagatorError::Incompatible("split-step spectral backend needs a periodic boundary".into()));
            }
            if !grid.is_power_of_two() {
                return Err(PropagatorError::Incompatible(format!(
                    "split-step spectral backend needs power-of-two point counts, got {:?}",
                    grid.points()
                )));
            }
        }
        Ok(())
    }

    /// Largest split-step dt allowed on `grid`: min over axes of 0.5·m·h²/ħ.
    pub fn trotter_cap(grid: &Grid, sys: &ParticleSystem) -> f64 {
        (0..grid.dims())
            .map(|a| {
                let h = grid.axis(a).spacing();
                0.5 * sys.axis_mass(a) * h * h / sys.hbar()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Thomas factorization of a constant complex tridiagonal matrix.
#[derive(Clone, Debug)]
struct Tridiagonal {
    lower: Complex64,
    /// Modified super-diagonal.
    c_prime: Vec<Complex64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<Complex64>,
}

impl Tridiagonal {
    fn factor(diag: &[Complex64], lower: Complex64, upper: Complex64) -> Self {
        let n = diag.len();
        let mut c_prime = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        let mut prev_c = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let pivot = if j == 0 { diag[0] } else { diag[j] - lower * prev_c };
            inv_pivot[j] = pivot.inv();
            prev_c = upper * inv_pivot[j];
            c_prime[j] = prev_c;
        }
        Self { lower, c_prime, inv_pivot }
    }

    fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        for j in 0..n {
            let prev = if j == 0 { Complex64::new(0.0, 0.0) } else { rhs[j - 1] };
            rhs[j] = (rhs[j] - self.lower * prev) * self.inv_pivot[j];
        }
        for j in (0..n.saturating_sub(1)).rev() {
            rhs[j] = rhs[j] - self.c_prime[j] * rhs[j + 1];
        }
    }
}

#[derive(Clone, Debug)]
struct SplitStep {
    fft: FftNd,
    kinetic: Vec<Complex64>,
    half_static: Option<Vec<Complex64>>,
}

#[derive(Clone, Debug)]
struct Implicit {
    /// ħ²/(2 m_a) per axis.
    kinetic_coef: Vec<f64>,
    cached: Option<Tridiagonal>,
}

#[derive(Clone, Debug)]
enum Kernel {
    Spectral(SplitStep),
    Implicit(Implicit),
}

/// A configured time stepper for one grid, particle system and potential.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: Grid,
    sys: ParticleSystem,
    potential: Potential,
    cfg: PropagatorConfig,
    static_v: Vec<f64>,
    couplings: Vec<(PointerCoupling, Vec<f64>)>,
    kernel: Kernel,
}

impl Propagator {
    pub fn new(grid: &Grid, sys: &ParticleSystem, potential: &Potential, cfg: &PropagatorConfig) -> Result<Self, PropagatorError> {
        sys.check_grid(grid)?;
        cfg.validate(grid)?;
        potential.validate(grid, sys)?;
        if potential.has_walls() && cfg.boundary != Boundary::DirichletZero {
            return Err(PropagatorError::Incompatible("box walls need the dirichlet_zero boundary".into()));
        }
        let hbar = sys.hbar();
        let dt = cfg.dt;
        let static_v = potential.static_values(grid, sys);
        let couplings: Vec<_> = potential.couplings().into_iter().map(|c| (c.clone(), c.values(grid))).collect();
        let kernel = match cfg.backend {
            Backend::SplitStepSpectral => {
                if !potential.is_free() {
                    let cap = PropagatorConfig::trotter_cap(grid, sys);
                    if dt.abs() > cap * (1.0 + 1e-12) {
                        return Err(PropagatorError::TimeStepTooLarge { dt, cap });
                    }
                }
                let fft = FftNd::new(grid);
                let strides = grid.strides();
                let ks: Vec<Vec<f64>> = (0..grid.dims())
                    .map(|a| wavenumbers(grid.axis(a).points, grid.axis(a).spacing()))
                    .collect();
                let kinetic = (0..grid.len())
                    .map(|i| {
                        let e: f64 = (0..grid.dims())
                            .map(|a| {
                                let k = ks[a][(i / strides[a]) % grid.axis(a).points];
                                hbar * k * k / (2.0 * sys.axis_mass(a))
                            })
                            .sum();
                        Complex64::from_polar(1.0, -e * dt)
                    })
                    .collect();
                let half_static = if static_v.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    Some(static_v.iter().map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * hbar))).collect())
                };
                Kernel::Spectral(SplitStep { fft, kinetic, half_static })
            }
            Backend::ImplicitMidpointFd => {
                let kinetic_coef = (0..grid.dims()).map(|a| hbar * hbar / (2.0 * sys.axis_mass(a))).collect();
                let mut imp = Implicit { kinetic_coef, cached: None };
                if grid.dims() == 1 && cfg.boundary == Boundary::DirichletZero && couplings.is_empty() {
                    imp.cached = Some(tridiagonal_system(grid, &imp.kinetic_coef, &static_v, dt / (2.0 * hbar)));
                }
                Kernel::Implicit(imp)
            }
        };
        Ok(Self { grid: grid.clone(), sys: sys.clone(), potential: potential.clone(), cfg: cfg.clone(), static_v, couplings, kernel })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.cfg
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.sys
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    /// Potential averaged over `[t, t + dt]` when a coupling window overlaps it.
    fn effective_potential(&self, t: f64) -> Option<Vec<f64>> {
        let mut v: Option<Vec<f64>> = None;
        for (c, values) in &self.couplings {
            let w = c.window_fraction(t, t + self.cfg.dt);
            if w > 0.0 {
                let acc = v.get_or_insert_with(|| self.static_v.clone());
                for (a, x) in acc.iter_mut().zip(values) {
                    *a += w * x;
                }
            }
        }
        v
    }

    /// Advance `psi` by one time step in place.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<(), PropagatorError> {
        if psi.grid() != &self.grid {
            return Err(GridError::GridMismatch.into());
        }
        let t = psi.time();
        let dt = self.cfg.dt;
        let hbar = self.sys.hbar();
        let v_eff = self.effective_potential(t);
        match &mut self.kernel {
            Kernel::Spectral(ss) => {
                let dynamic_half: Option<Vec<Complex64>> =
                    v_eff.map(|v| v.iter().map(|x| Complex64::from_polar(1.0, -x * dt / (2.0 * hbar))).collect());
                let half = dynamic_half.as_ref().or(ss.half_static.as_ref());
                for s in 0..psi.spin_components() {
                    let comp = psi.component_mut(s);
                    if let Some(h) = half {
                        comp.iter_mut().zip(h).for_each(|(z, p)| *z *= p);
                    }
                    ss.fft.forward(comp);
                    comp.iter_mut().zip(&ss.kinetic).for_each(|(z, p)| *z *= p);
                    ss.fft.inverse(comp);
                    if let Some(h) = half {
                        comp.iter_mut().zip(h).for_each(|(z, p)| *z *= p);
                    }
                }
            }
            Kernel::Implicit(imp) => {
                let tau = dt / (2.0 * hbar);
                let v = v_eff.as_deref().unwrap_or(&self.static_v);
                let tri_dynamic;
                let tri = if self.grid.dims() == 1 && self.cfg.boundary == Boundary::DirichletZero {
                    match (&imp.cached, v_eff.is_some()) {
                        (Some(t), false) => Some(t),
                        _ => {
                            tri_dynamic = tridiagonal_system(&self.grid, &imp.kinetic_coef, v, tau);
                            Some(&tri_dynamic)
                        }
                    }
                } else {
                    None
                };
                for s in 0..psi.spin_components() {
                    let comp = psi.component_mut(s);
                    let h_psi = apply_hamiltonian(&self.grid, &imp.kinetic_coef, v, self.cfg.boundary, comp);
                    let mut rhs: Vec<Complex64> =
                        comp.iter().zip(&h_psi).map(|(z, hz)| z - Complex64::new(0.0, tau) * hz).collect();
                    match tri {
                        Some(tri) => {
                            tri.solve(&mut rhs);
                            comp.copy_from_slice(&rhs);
                        }
                        None => {
                            let x = cocg_solve(&self.grid, &imp.kinetic_coef, v, self.cfg.boundary, tau, &rhs, comp)?;
                            comp.copy_from_slice(&x);
                        }
                    }
                }
            }
        }
        psi.set_time(t + dt);
        if !psi.norm_sqr().is_finite() {
            return Err(PropagatorError::NonFinite { time: psi.time() });
        }
        Ok(())
    }

    /// Number of steps covering `[t_start, t_final]` exactly.
    pub fn steps_for(&self, t_start: f64, t_final: f64) -> Result<usize, PropagatorError> {
        let span = t_final - t_start;
        let dt = self.cfg.dt;
        if span * dt.signum() < -1e-12 * dt.abs() {
            return Err(PropagatorError::BackwardSpan { t_start, t_final });
        }
        let n = (span / dt).round();
        if (n * dt - span).abs() > 1e-9 * dt.abs().max(span.abs()) {
            return Err(PropagatorError::NonIntegralSpan { span, dt });
        }
        Ok(n.max(0.0) as usize)
    }

    /// Frames at every `frame_stride` steps from `psi.time()` to `t_final`, final frame included.
    pub fn evolve(&mut self, psi: &WaveFunction, t_final: f64, frame_stride: usize) -> Result<Vec<WaveFunction>, PropagatorError> {
        if frame_stride == 0 {
            return Err(PropagatorError::ZeroStride);
        }
        let steps = self.steps_for(psi.time(), t_final)?;
        let t0 = psi.time();
        let mut cur = psi.clone();
        let mut frames = vec![cur.clone()];
        for n in 1..=steps {
            self.step(&mut cur)?;
            if n == steps {
                // pin the stamp to avoid accumulated rounding in t
                cur.set_time(t_final);
            } else {
                cur.set_time(t0 + n as f64 * self.cfg.dt);
            }
            if n % frame_stride == 0 || n == steps {
                frames.push(cur.clone());
            }
        }
        Ok(frames)
    }
}

/// `(I + iτH)` for a 1D Dirichlet grid.
fn tridiagonal_system(grid: &Grid, kinetic_coef: &[f64], v: &[f64], tau: f64) -> Tridiagonal {
    let h = grid.axis(0).spacing();
    let c = kinetic_coef[0] / (h * h);
    let n = grid.len();
    let diag: Vec<Complex64> = (0..n)
        .map(|j| {
            let wall = if j == 0 || j == n - 1 { 3.0 } else { 2.0 };
            Complex64::new(1.0, tau * (wall * c + v[j]))
        })
        .collect();
    let off = Complex64::new(0.0, -tau * c);
    Tridiagonal::factor(&diag, off, off)
}

fn apply_hamiltonian(grid: &Grid, kinetic_coef: &[f64], v: &[f64], boundary: Boundary, psi: &[Complex64]) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = psi.iter().zip(v).map(|(z, x)| z * x).collect();
    for (a, coef) in kinetic_coef.iter().enumerate() {
        let d2 = second_derivative(grid, psi, a, boundary);
        out.iter_mut().zip(d2).for_each(|(o, d)| *o -= d * *coef);
    }
    out
}

/// Solve `(I + iτH) x = b` by Jacobi-preconditioned conjugate orthogonal CG.
/// The matrix is complex symmetric, so the unconjugated bilinear form applies.
fn cocg_solve(
    grid: &Grid,
    kinetic_coef: &[f64],
    v: &[f64],
    boundary: Boundary,
    tau: f64,
    b: &[Complex64],
    guess: &[Complex64],
) -> Result<Vec<Complex64>, PropagatorError> {
    const TOL: f64 = 1e-14;
    const MAX_ITER: usize = 20_000;
    const RESTART: usize = 500;
    let i_tau = Complex64::new(0.0, tau);
    let apply = |x: &[Complex64]| -> Vec<Complex64> {
        let hx = apply_hamiltonian(grid, kinetic_coef, v, boundary, x);
        x.iter().zip(hx).map(|(xi, hi)| xi + i_tau * hi).collect()
    };
    let diag_kin: f64 = (0..grid.dims())
        .map(|a| 2.0 * kinetic_coef[a] / grid.axis(a).spacing().powi(2))
        .sum();
    let inv_diag: Vec<Complex64> = v.iter().map(|x| (Complex64::new(1.0, tau * (diag_kin + x))).inv()).collect();
    let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let bnorm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let mut x = guess.to_vec();
    let ax = apply(&x);
    let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<Complex64> = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rho = dot(&r, &z);
    let mut residual = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / bnorm;
    for it in 1..=MAX_ITER {
        if residual < TOL {
            return Ok(x);
        }
        if it % RESTART == 0 {
            // recurrences drift in long runs; restart from the true residual
            let ax = apply(&x);
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            z = r.iter().zip(&inv_diag).map(|(ri, d)| ri * d).collect();
            p = z.clone();
            rho = dot(&r, &z);
        }
        let q = apply(&p);
        let alpha = rho / dot(&p, &q);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        residual = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / bnorm;
        for i in 0..z.len() {
            z[i] = r[i] * inv_diag[i];
        }
        let rho_new = dot(&r, &z);
        let beta = rho_new / rho;
        rho = rho_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    if residual < 1e-12 {
        return Ok(x);
    }
    Err(PropagatorError::SolverStalled { iterations: MAX_ITER, residual })
}

/// One step of `psi` under `potential`.
pub fn step(psi: &WaveFunction, potential: &Potential, sys: &ParticleSystem, cfg: &PropagatorConfig) -> Result<WaveFunction, PropagatorError> {
    let mut prop = Propagator::new(psi.grid(), sys, potential, cfg)?;
    let mut out = psi.clone();
    prop.step(&mut out)?;
    Ok(out)
}

/// Frames of `psi` evolved to `t_final`, one every `frame_stride` steps.
pub fn evolve(
    psi: &WaveFunction,
    potential: &Potential,
    sys: &ParticleSystem,
    t_final: f64,
    cfg: &PropagatorConfig,
    frame_stride: usize,
) -> Result<Vec<WaveFunction>, PropagatorError> {
    Propagator::new(psi.grid(), sys, potential, cfg)?.evolve(psi, t_final, frame_stride)
}

/// Lowest eigenvector of the discrete 1D Dirichlet Hamiltonian used by the
/// implicit backend, found by inverse iteration. Returns the state (real,
/// positive in the interior, normalized) and its eigenvalue.
pub fn discrete_ground_state(
    grid: &Grid,
    sys: &ParticleSystem,
    potential: &Potential,
) -> Result<(WaveFunction, f64), PropagatorError> {
    if grid.dims() != 1 {
        return Err(PropagatorError::Incompatible("discrete ground state is implemented for one axis".into()));
    }
    sys.check_grid(grid)?;
    potential.validate(grid, sys)?;
    let v = potential.static_values(grid, sys);
    let n = grid.len();
    let h = grid.axis(0).spacing();
    let c = sys.hbar() * sys.hbar() / (2.0 * sys.axis_mass(0) * h * h);
    let shift = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let diag: Vec<Complex64> = (0..n)
        .map(|j| {
            let wall = if j == 0 || j == n - 1 { 3.0 } else { 2.0 };
            Complex64::new(wall * c + v[j] - shift, 0.0)
        })
        .collect();
    let tri = Tridiagonal::factor(&diag, Complex64::new(-c, 0.0), Complex64::new(-c, 0.0));
    let mut x: Vec<Complex64> = (0..n).map(|j| Complex64::new(1.0 + 0.1 * (j % 3) as f64, 0.0)).collect();
    let rayleigh = |x: &[Complex64]| -> f64 {
        let hx = apply_hamiltonian(grid, &[sys.hbar() * sys.hbar() / (2.0 * sys.axis_mass(0))], &v, Boundary::DirichletZero, x);
        let num: f64 = x.iter().zip(&hx).map(|(a, b)| a.re * b.re).sum();
        num / x.iter().map(|a| a.re * a.re).sum::<f64>()
    };
    for _ in 0..10_000 {
        let prev = x.clone();
        tri.solve(&mut x);
        let norm = x.iter().map(|z| z.re * z.re).sum::<f64>().sqrt();
        x.iter_mut().for_each(|z| *z = Complex64::new(z.re / norm, 0.0));
        let change = x.iter().zip(&prev).map(|(a, b)| (a.re - b.re).powi(2)).sum::<f64>().sqrt();
        if change <= 1e-15 {
            break;
        }
    }
    let energy = rayleigh(&x);
    let sign = if x.iter().map(|z| z.re).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    x.iter_mut().for_each(|z| z.re *= sign);
    let psi = WaveFunction::new(grid.clone(), 1, x, 0.0)?.normalize()?;
    Ok((psi, energy))
}

/// Re-embed a wave function confined between walls into a larger grid with
/// the same spacing, padding with zeros ("removing the walls").
pub fn release_walls(psi: &WaveFunction, target: &Grid) -> Result<WaveFunction, PropagatorError> {
    let src = psi.grid();
    if src.dims() != target.dims() {
        return Err(GridError::GridMismatch.into());
    }
    let mut offsets = Vec::with_capacity(src.dims());
    for a in 0..src.dims() {
        let (s, t) = (src.axis(a), target.axis(a));
        let h = s.spacing();
        if (t.spacing() - h).abs() > 1e-12 * h {
            return Err(PropagatorError::Incompatible(format!("axis {a}: spacing {} differs from {}", t.spacing(), h)));
        }
        let shift = (s.min - t.min) / h;
        let off = shift.round();
        if (shift - off).abs() > 1e-6 || off < 0.0 || off as usize + s.points > t.points {
            return Err(PropagatorError::Incompatible(format!("axis {a}: source cells do not align inside the target grid")));
        }
        offsets.push(off as usize);
    }
    let mut out = WaveFunction::zeros(target, psi.spin_components(), psi.time());
    let (n_src, n_tgt) = (src.len(), target.len());
    for s in 0..psi.spin_components() {
        for i in 0..n_src {
            let idx: Vec<usize> = src.multi_index(i).iter().zip(&offsets).map(|(j, o)| j + o).collect();
            out.amplitudes_mut()[s * n_tgt + target.flat_index(&idx)] = psi.amplitudes()[s * n_src + i];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn tridiagonal_solves() {
        let diag = vec![Complex64::new(4.0, 1.0); 6];
        let off = Complex64::new(-1.0, 0.5);
        let tri = Tridiagonal::factor(&diag, off, off);
        let x: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();
        let mut b: Vec<Complex64> = (0..6)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += off * x[i - 1];
                }
                if i < 5 {
                    s += off * x[i + 1];
                }
                s
            })
            .collect();
        tri.solve(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    #[test]
    fn backend_boundary_rules() {
        let g = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let bad = PropagatorConfig { backend: Backend::SplitStepSpectral, dt: 1e-3, boundary: Boundary::DirichletZero };
        assert!(matches!(bad.validate(&g), Err(PropagatorError::Incompatible(_))));
        let g24 = make_grid(&[(0.0, 1.0)], &[24]).unwrap();
        assert!(PropagatorConfig::spectral(1e-3).validate(&g24).is_err());
        assert!(PropagatorConfig::implicit_dirichlet(1e-3).validate(&g24).is_ok());
        let sys = ParticleSystem::natural(1);
        let walls = Potential::BoxWalls { walls: vec![(0.0, 1.0)] };
        assert!(Propagator::new(&g, &sys, &walls, &PropagatorConfig::spectral(1e-5)).is_err());
    }

    #[test]
    fn trotter_cap_applies_only_with_a_potential() {
        let g = make_grid(&[(-8.0, 8.0)], &[128]).unwrap();
        let sys = ParticleSystem::natural(1);
        let cap = PropagatorConfig::trotter_cap(&g, &sys);
        let harmonic = Potential::Harmonic { omega: vec![1.0], center: None };
        assert!(matches!(
            Propagator::new(&g, &sys, &harmonic, &PropagatorConfig::spectral(100.0 * cap)),
            Err(PropagatorError::TimeStepTooLarge { .. })
        ));
        assert!(Propagator::new(&g, &sys, &Potential::Free, &PropagatorConfig::spectral(100.0 * cap)).is_ok());
    }

    #[test]
    fn zero_step_evolution_returns_input() {
        let g = make_grid(&[(0.0, 2.0 * PI)], &[32]).unwrap();
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::from_polar(1.0, q[0])).unwrap().normalize().unwrap();
        let frames = evolve(&psi, &Potential::Free, &ParticleSystem::natural(1), 0.0, &PropagatorConfig::spectral(0.1), 1).unwrap();
        assert_eq!(frames, vec![psi]);
    }

    #[test]
    fn implicit_cocg_matches_thomas_in_1d_dirichlet() {
        let g = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::new((PI * q[0]).sin() + 0.3 * (3.0 * PI * q[0]).sin(), 0.0))
            .unwrap()
            .normalize()
            .unwrap();
        let v = vec![0.0; 64];
        let coef = [0.5];
        let tau = 1e-3;
        let h_psi = apply_hamiltonian(&g, &coef, &v, Boundary::DirichletZero, psi.amplitudes());
        let rhs: Vec<Complex64> = psi.amplitudes().iter().zip(&h_psi).map(|(z, hz)| z - Complex64::new(0.0, tau) * hz).collect();
        let mut thomas = rhs.clone();
        tridiagonal_system(&g, &coef, &v, tau).solve(&mut thomas);
        let cocg = cocg_solve(&g, &coef, &v, Boundary::DirichletZero, tau, &rhs, psi.amplitudes()).unwrap();
        for (a, b) in thomas.iter().zip(&cocg) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn discrete_ground_states() {
        let sys = ParticleSystem::natural(1);
        let g = make_grid(&[(-8.0, 8.0)], &[256]).unwrap();
        let (psi, e) = discrete_ground_state(&g, &sys, &Potential::Harmonic { omega: vec![1.0], center: None }).unwrap();
        assert!((e - 0.5).abs() < 1e-3, "{e}");
        assert!(psi.amplitudes().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
        let b = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let (psi, e) = discrete_ground_state(&b, &sys, &Potential::Free).unwrap();
        let h = 1.0 / 64.0;
        assert!((e - 2.0 * (1.0 - (PI * h).cos()) / (2.0 * h * h) * 2.0 / 2.0).abs() < 1e-9);
        let exact = WaveFunction::from_fn(&b, 0.0, |q| Complex64::new((PI * q[0]).sin(), 0.0)).unwrap().normalize().unwrap();
        assert!(psi.distance(&exact).unwrap() < 1e-10);
    }

    #[test]
    fn release_pads_with_zeros_and_keeps_norm() {
        let boxg = make_grid(&[(-0.5, 0.5)], &[64]).unwrap();
        let big = make_grid(&[(-4.0, 4.0)], &[512]).unwrap();
        let psi = WaveFunction::from_fn(&boxg, 0.3, |q| Complex64::new((PI * (q[0] + 0.5)).sin(), 0.0)).unwrap().normalize().unwrap();
        let out = release_walls(&psi, &big).unwrap();
        assert_eq!(out.norm(), psi.norm());
        assert_eq!(out.time(), 0.3);
        let off = big.axis(0).points / 2 - 32;
        assert_eq!(out.amplitudes()[off..off + 64], psi.amplitudes()[..]);
        let misaligned = make_grid(&[(-4.003, 4.0)], &[512]).unwrap();
        assert!(release_walls(&psi, &misaligned).is_err());
    }
}
