//! The two Schrödinger backends on a harmonic oscillator: split-step spectral on a
//! periodic grid and Crank–Nicolson with hard walls. Prints norm and energy drift
//! and the continuity-equation residual.

use bohmian::propagator::{continuity_residual, energy, Potential, Propagator, PropagatorConfig};
use bohmian::{make_grid, ParticleSystem, WaveFunction};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = make_grid(&[(-10.0, 10.0)], &[512])?;
    let sys = ParticleSystem::natural(1);
    let potential = Potential::Harmonic { omega: vec![1.0], center: None };
    let psi0 = WaveFunction::from_fn(&grid, 0.0, |q| Complex64::new((-(q[0] - 2.0).powi(2) / 2.0).exp(), 0.0))?.normalize()?;

    for (name, cfg) in [("split-step", PropagatorConfig::spectral(5e-4)), ("crank-nicolson", PropagatorConfig::implicit_dirichlet(5e-4))] {
        let boundary = cfg.boundary;
        let mut prop = Propagator::new(&grid, &sys, &potential, &cfg)?;
        let mut psi = psi0.clone();
        let e0 = energy(&psi, &sys, &potential, boundary);
        let mut recent = Vec::new();
        for _ in 0..6000 {
            prop.step(&mut psi)?;
            recent.push(psi.clone());
            if recent.len() > 3 {
                recent.remove(0);
            }
        }
        let residual = continuity_residual(&recent, &sys, boundary)?;
        println!(
            "{name:>15}: norm drift {:.2e}, energy drift {:.2e}, continuity residual {:.2e}",
            (psi.norm_sqr() - 1.0).abs(),
            (energy(&psi, &sys, &potential, boundary) - e0).abs(),
            residual.norm
        );
    }
    Ok(())
}
