//! Guidance for a two-component spinor: the velocity uses the spin-summed
//! current and density, and a global SU(2) rotation of the spinor leaves it unchanged.

use bohmian::derivatives::Boundary;
use bohmian::guidance::velocity_field_spinor;
use bohmian::{make_grid, Configuration, ParticleSystem, WaveFunction};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = make_grid(&[(-10.0, 10.0), (-10.0, 10.0)], &[128, 128])?;
    let sys = ParticleSystem::single(1.0, 2)?;
    let up = |q: &[f64]| Complex64::from_polar((-(q[0] * q[0] + q[1] * q[1]) / 4.0).exp(), 1.5 * q[0]);
    let down = |q: &[f64]| Complex64::from_polar(0.6 * (-((q[0] - 1.0).powi(2) + q[1] * q[1]) / 4.0).exp(), -0.8 * q[1]);
    let psi = WaveFunction::from_spinor_fns(&grid, 0.0, &[&up, &down])?.normalize()?;

    // U = [[a, -b*], [b, a*]] with |a|² + |b|² = 1
    let (a, b) = (Complex64::from_polar(0.8, 0.3), Complex64::from_polar(0.6, -1.1));
    let rotated = WaveFunction::from_spinor_fns(
        &grid,
        0.0,
        &[&|q: &[f64]| a * up(q) - b.conj() * down(q), &|q: &[f64]| b * up(q) + a.conj() * down(q)],
    )?
    .normalize()?;

    for point in [[0.3, -0.2], [1.0, 0.5], [-0.7, 1.2]] {
        let q = Configuration::new(point.to_vec(), 0.0);
        let v = velocity_field_spinor(&psi, &sys, Boundary::Periodic, &q)?;
        let w = velocity_field_spinor(&rotated, &sys, Boundary::Periodic, &q)?;
        println!("q = {point:?}: v = ({:+.6}, {:+.6}), rotated spinor differs by {:.1e}", v[0], v[1], (v[0] - w[0]).hypot(v[1] - w[1]));
    }
    Ok(())
}
