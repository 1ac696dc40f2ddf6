//! Randomized structural cases shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use bohmian::equilibrium::sample_equilibrium;
use bohmian::guidance::{integrate_ensemble, permute_labels, velocity_field, velocity_field_spinor, IntegratorConfig, TrajectoryStatus};
use bohmian::propagator::{Boundary, Potential, Propagator, PropagatorConfig};
use bohmian::{make_grid, Configuration, Grid, ParticleSystem, WaveFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCALING_TOLERANCE: f64 = 1e-10;
pub const SPINOR_TOLERANCE: f64 = 1e-9;
pub const PERMUTATION_TOLERANCE: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Copy, Debug)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    pub k: f64,
    pub amp: Complex64,
}

impl Packet {
    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            center: rng.random_range(-3.0..3.0),
            width: rng.random_range(0.6..1.4),
            k: rng.random_range(-2.0..2.0),
            amp: Complex64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..std::f64::consts::TAU)),
        }
    }

    pub fn at(&self, x: f64) -> Complex64 {
        let d = x - self.center;
        self.amp * Complex64::from_polar((-d * d / (4.0 * self.width * self.width)).exp(), self.k * x)
    }
}

/// Sum of one to three random packets.
pub fn random_superposition(rng: &mut impl Rng) -> Vec<Packet> {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| Packet::random(rng)).collect()
}

pub fn eval(packets: &[Packet], x: f64) -> Complex64 {
    packets.iter().map(|p| p.at(x)).sum()
}

pub fn line(points: usize) -> Grid {
    make_grid(&[(-16.0, 16.0)], &[points]).unwrap()
}

pub fn plane(points: usize) -> Grid {
    make_grid(&[(-12.0, 12.0), (-12.0, 12.0)], &[points, points]).unwrap()
}

fn random_c(rng: &mut impl Rng) -> Complex64 {
    Complex64::from_polar(10f64.powf(rng.random_range(-3.0..3.0)), rng.random_range(0.0..std::f64::consts::TAU))
}

/// Largest relative change of the velocity when ψ is replaced by cψ.
pub fn scaling_case(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (a, b) = (random_superposition(&mut rng), random_superposition(&mut rng));
    let grid = plane(64);
    let psi = WaveFunction::from_fn(&grid, 0.0, |q| eval(&a, q[0]) * eval(&b, q[1])).unwrap().normalize().unwrap();
    let c = random_c(&mut rng);
    let scaled = psi.scaled(c);
    let sys = ParticleSystem::single(rng.random_range(0.5..2.0), 2).unwrap();
    let mut worst = 0.0f64;
    for q in sample_equilibrium(&psi, 20, seed).unwrap().configurations {
        let v = velocity_field(&psi, &sys, Boundary::Periodic, &q).unwrap();
        let w = velocity_field(&scaled, &sys, Boundary::Periodic, &q).unwrap();
        for (x, y) in v.iter().zip(&w) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    worst
}

/// Largest velocity change under a random constant U(2) rotation of a spinor.
pub fn spinor_case(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (up, down) = (random_superposition(&mut rng), random_superposition(&mut rng));
    let grid = line(256);
    let f_up = |q: &[f64]| eval(&up, q[0]);
    let f_down = |q: &[f64]| eval(&down, q[0]);
    let psi = WaveFunction::from_spinor_fns(&grid, 0.0, &[&f_up, &f_down]).unwrap().normalize().unwrap();

    let theta = rng.random_range(0.0..std::f64::consts::FRAC_PI_2);
    let phases: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let a = Complex64::from_polar(theta.cos(), phases[0]);
    let b = Complex64::from_polar(theta.sin(), phases[1]);
    let g = Complex64::from_polar(1.0, phases[2]);
    let r_up = |q: &[f64]| g * (a * f_up(q) - b.conj() * f_down(q));
    let r_down = |q: &[f64]| g * (b * f_up(q) + a.conj() * f_down(q));
    let rotated = WaveFunction::from_spinor_fns(&grid, 0.0, &[&r_up, &r_down]).unwrap();

    let sys = ParticleSystem::natural(1);
    let mut worst = 0.0f64;
    for q in sample_equilibrium(&psi, 20, seed).unwrap().configurations {
        let v = velocity_field_spinor(&psi, &sys, Boundary::Periodic, &q).unwrap();
        let w = velocity_field_spinor(&rotated, &sys, Boundary::Periodic, &q).unwrap();
        worst = worst.max((v[0] - w[0]).abs());
    }
    worst
}

fn frames(psi: &WaveFunction, sys: &ParticleSystem, dt: f64, steps: usize, stride: usize) -> Vec<WaveFunction> {
    let mut prop = Propagator::new(psi.grid(), sys, &Potential::Free, &PropagatorConfig::spectral(dt)).unwrap();
    let mut psi = psi.clone();
    let mut out = vec![psi.clone()];
    for s in 1..=steps {
        prop.step(&mut psi).unwrap();
        if s % stride == 0 {
            out.push(psi.clone());
        }
    }
    out
}

/// Two identical particles in a random (anti)symmetric state: largest distance
/// between the trajectory from a swapped start and the swapped trajectory.
pub fn permutation_case(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let (l, r) = (random_superposition(&mut rng), random_superposition(&mut rng));
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let grid = plane(64);
    let psi = WaveFunction::from_fn(&grid, 0.0, |q| eval(&l, q[0]) * eval(&r, q[1]) + sign * eval(&l, q[1]) * eval(&r, q[0]))
        .unwrap()
        .normalize()
        .unwrap();
    let sys = ParticleSystem::new(vec![1.0, 1.0], vec![1, 1], 1.0).unwrap();
    let frames = frames(&psi, &sys, 0.01, 40, 4);
    let starts = sample_equilibrium(&psi, 10, seed).unwrap().configurations;
    let mut all = starts.clone();
    for q in &starts {
        all.push(permute_labels(q, &sys, &[1, 0]).unwrap());
    }
    let ens = integrate_ensemble(&all, &frames, &sys, Boundary::Periodic, &IntegratorConfig::default()).unwrap();
    let (a, b) = ens.trajectories.split_at(starts.len());
    let mut worst = 0.0f64;
    for (ta, tb) in a.iter().zip(b) {
        if ta.status != TrajectoryStatus::Completed || tb.status != TrajectoryStatus::Completed {
            continue;
        }
        for (qa, qb) in ta.samples.iter().zip(&tb.samples) {
            let swapped = permute_labels(&Configuration::new(qa.coords.clone(), qa.time), &sys, &[1, 0]).unwrap();
            let d = swapped.coords.iter().zip(&qb.coords).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    worst
}

/// Order violations of a sorted 1D ensemble guided by a random superposition.
pub fn crossing_case(seed: u64) -> usize {
    let mut rng = rng(seed);
    let packets = random_superposition(&mut rng);
    let grid = line(512);
    let psi = WaveFunction::from_fn(&grid, 0.0, |q| eval(&packets, q[0])).unwrap().normalize().unwrap();
    let sys = ParticleSystem::natural(1);
    let frames = frames(&psi, &sys, 0.005, 200, 4);
    let mut starts = sample_equilibrium(&psi, 40, seed).unwrap().configurations;
    starts.sort_by(|a, b| a.coords[0].total_cmp(&b.coords[0]));
    let ens = integrate_ensemble(&starts, &frames, &sys, Boundary::Periodic, &IntegratorConfig::default()).unwrap();
    let live: Vec<_> = ens.trajectories.iter().filter(|t| t.status == TrajectoryStatus::Completed).collect();
    let mut violations = 0;
    for k in 0..live[0].samples.len() {
        for w in live.windows(2) {
            if w[0].samples[k].coords[0] > w[1].samples[k].coords[0] {
                violations += 1;
            }
        }
    }
    violations
}

/// Largest per-step phase error of a spectral plane wave against `exp(-iħk²dt/2m)`.
pub fn plane_wave_phase_error() -> f64 {
    let (l, n) = (2.0 * std::f64::consts::PI * 8.0, 256);
    let grid = make_grid(&[(0.0, l)], &[n]).unwrap();
    let mut worst = 0.0f64;
    for (mass, mode, dt) in [(1.0, 3.0, 0.01), (0.5, 7.0, 0.002), (2.0, 20.0, 0.05)] {
        let k = 2.0 * std::f64::consts::PI * mode / l;
        let sys = ParticleSystem::new(vec![mass], vec![1], 1.0).unwrap();
        let mut psi = WaveFunction::from_fn(&grid, 0.0, |q| Complex64::from_polar(1.0, k * q[0])).unwrap().normalize().unwrap();
        let mut prop = Propagator::new(&grid, &sys, &Potential::Free, &PropagatorConfig::spectral(dt)).unwrap();
        let expected = -k * k * dt / (2.0 * mass);
        for _ in 0..10 {
            let before = psi.clone();
            prop.step(&mut psi).unwrap();
            for (a, b) in psi.amplitudes().iter().zip(before.amplitudes()) {
                let phase = (a / b).arg();
                let err = (phase - expected + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
                worst = worst.max(err.abs());
            }
        }
    }
    worst
}

fn oscillator_packet(grid: &Grid) -> WaveFunction {
    WaveFunction::from_fn(grid, 0.0, |q| Complex64::from_polar((-(q[0] - 1.5).powi(2) / 2.0).exp(), 0.7 * q[0]))
        .unwrap()
        .normalize()
        .unwrap()
}

/// Norm drift after 10⁵ steps in a harmonic well for both backends.
pub fn long_run_norm_drift() -> [f64; 2] {
    let grid = make_grid(&[(-10.0, 10.0)], &[256]).unwrap();
    let sys = ParticleSystem::natural(1);
    let pot = Potential::Harmonic { omega: vec![1.0], center: None };
    let mut out = [0.0; 2];
    for (i, cfg) in [PropagatorConfig::spectral(1e-3), PropagatorConfig::implicit_dirichlet(1e-3)].into_iter().enumerate() {
        let mut psi = oscillator_packet(&grid);
        let mut prop = Propagator::new(&grid, &sys, &pot, &cfg).unwrap();
        for _ in 0..100_000 {
            prop.step(&mut psi).unwrap();
        }
        out[i] = (psi.norm_sqr() - 1.0).abs();
    }
    out
}

/// Continuity residual norms at `(dt, h)` and `(dt/2, h/2)` for a moving packet in a harmonic well.
pub fn continuity_residuals() -> (f64, f64) {
    let sys = ParticleSystem::natural(1);
    let pot = Potential::Harmonic { omega: vec![0.5], center: None };
    let residual = |points: usize, dt: f64| {
        let grid = make_grid(&[(-12.0, 12.0)], &[points]).unwrap();
        let mut psi = oscillator_packet(&grid);
        let mut prop = Propagator::new(&grid, &sys, &pot, &PropagatorConfig::implicit_dirichlet(dt)).unwrap();
        let steps = (0.5 / dt).round() as usize;
        let mut window = Vec::new();
        for _ in 0..=steps + 1 {
            window.push(psi.clone());
            if window.len() > 3 {
                window.remove(0);
            }
            prop.step(&mut psi).unwrap();
        }
        bohmian::propagator::continuity_residual(&window, &sys, Boundary::DirichletZero).unwrap().norm
    };
    (residual(256, 0.02), residual(512, 0.01))
}

/// L² distance after evolving forward and then backward with the split-step backend.
pub fn time_reversal_error() -> f64 {
    let grid = make_grid(&[(-12.0, 12.0)], &[512]).unwrap();
    let sys = ParticleSystem::natural(1);
    let pot = Potential::Harmonic { omega: vec![0.8], center: None };
    let psi0 = oscillator_packet(&grid);
    let mut psi = psi0.clone();
    for dt in [1e-3, -1e-3] {
        let mut prop = Propagator::new(&grid, &sys, &pot, &PropagatorConfig::spectral(dt)).unwrap();
        for _ in 0..2000 {
            prop.step(&mut psi).unwrap();
        }
    }
    let dv = grid.cell_volume();
    (psi.amplitudes().iter().zip(psi0.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() * dv).sqrt()
}
