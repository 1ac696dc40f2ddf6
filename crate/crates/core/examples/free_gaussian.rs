//! A free Gaussian packet: propagate it, guide an equilibrium ensemble through
//! the frames and compare each trajectory with the scaling law X(t) = x0·σ(t)/σ0.

use bohmian::equilibrium::sample_equilibrium;
use bohmian::guidance::{integrate_ensemble, IntegratorConfig};
use bohmian::propagator::{Boundary, Potential, Propagator, PropagatorConfig};
use bohmian::{make_grid, ParticleSystem, WaveFunction};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sigma0 = 1.0;
    let grid = make_grid(&[(-48.0, 48.0)], &[4096])?;
    let sys = ParticleSystem::natural(1);
    let psi0 = WaveFunction::from_fn(&grid, 0.0, |q| Complex64::new((-q[0] * q[0] / (4.0 * sigma0 * sigma0)).exp(), 0.0))?
        .normalize()?;

    let dt = 0.01;
    let mut prop = Propagator::new(&grid, &sys, &Potential::Free, &PropagatorConfig::spectral(dt))?;
    let mut psi = psi0.clone();
    let mut frames = vec![psi.clone()];
    for _ in 0..200 {
        prop.step(&mut psi)?;
        frames.push(psi.clone());
    }

    let samples = sample_equilibrium(&psi0, 1000, 11)?;
    let ensemble = integrate_ensemble(&samples.configurations, &frames, &sys, Boundary::Periodic, &IntegratorConfig::default())?;

    let mut worst: f64 = 0.0;
    for tr in ensemble.completed() {
        let x0 = tr.initial().coords[0];
        for c in &tr.samples {
            let s = sigma0 * (1.0 + (c.time / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
            worst = worst.max((c.coords[0] - x0 * s / sigma0).abs());
        }
    }
    println!("trajectories: {}", ensemble.len());
    println!("largest deviation from x0·σ(t)/σ0 over t ∈ [0, 2]: {worst:.3e}");
    Ok(())
}
