mod common;

use bohmian::propagator::{discrete_ground_state, energy, Potential, Propagator, PropagatorConfig};
use bohmian::{make_grid, ParticleSystem, WaveFunction};
use common::*;
use num_complex::Complex64;

#[test]
fn plane_wave_picks_up_the_dispersion_phase() {
    let err = plane_wave_phase_error();
    assert!(err <= 1e-8, "phase error per step {err:e}");
}

#[test]
fn norm_holds_over_a_long_run() {
    let [spectral, implicit] = long_run_norm_drift();
    assert!(spectral <= 1e-6, "split-step drift {spectral:e}");
    assert!(implicit <= 1e-6, "implicit drift {implicit:e}");
}

#[test]
fn continuity_residual_is_second_order() {
    let (coarse, fine) = continuity_residuals();
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "residuals {coarse:e} -> {fine:e}, ratio {ratio}");
}

#[test]
fn forward_then_backward_returns_the_initial_state() {
    let err = time_reversal_error();
    assert!(err <= 1e-6, "round trip error {err:e}");
}

#[test]
fn energy_is_conserved_in_a_static_well() {
    let grid = make_grid(&[(-10.0, 10.0)], &[256]).unwrap();
    let sys = ParticleSystem::natural(1);
    let pot = Potential::Harmonic { omega: vec![1.0], center: None };
    for cfg in [PropagatorConfig::spectral(1e-3), PropagatorConfig::implicit_dirichlet(1e-3)] {
        let mut psi = WaveFunction::from_fn(&grid, 0.0, |q| Complex64::from_polar((-(q[0] - 1.0).powi(2) / 2.0).exp(), 0.5 * q[0]))
            .unwrap()
            .normalize()
            .unwrap();
        let e0 = energy(&psi, &sys, &pot, cfg.boundary);
        let mut prop = Propagator::new(&grid, &sys, &pot, &cfg).unwrap();
        for _ in 0..5000 {
            prop.step(&mut psi).unwrap();
        }
        let drift = (energy(&psi, &sys, &pot, cfg.boundary) - e0).abs() / e0;
        assert!(drift <= 1e-6, "{:?}: relative energy drift {drift:e}", cfg.backend);
    }
}

#[test]
fn oscillator_ground_energy_is_half_omega() {
    let grid = make_grid(&[(-10.0, 10.0)], &[512]).unwrap();
    let sys = ParticleSystem::natural(1);
    for omega in [0.5, 1.0, 2.0] {
        let (_, e) = discrete_ground_state(&grid, &sys, &Potential::Harmonic { omega: vec![omega], center: None }).unwrap();
        assert!((e - 0.5 * omega).abs() <= 1e-3 * omega, "omega {omega}: E = {e}");
    }
}

#[test]
fn box_mode_is_stationary_up_to_phase() {
    let grid = make_grid(&[(0.0, 1.0)], &[400]).unwrap();
    let sys = ParticleSystem::natural(1);
    let psi0 = WaveFunction::from_fn(&grid, 0.0, |q| Complex64::new((3.0 * std::f64::consts::PI * q[0]).sin(), 0.0))
        .unwrap()
        .normalize()
        .unwrap();
    let mut psi = psi0.clone();
    let mut prop = Propagator::new(&grid, &sys, &Potential::Free, &PropagatorConfig::implicit_dirichlet(1e-4)).unwrap();
    for _ in 0..1000 {
        prop.step(&mut psi).unwrap();
    }
    let overlap = psi0.inner_product(&psi).unwrap().norm();
    assert!((overlap - 1.0).abs() <= 1e-10, "overlap {overlap}");
}
