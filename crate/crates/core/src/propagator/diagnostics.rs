use num_complex::Complex64;

use super::{Potential, PropagatorError};
use crate::derivatives::{divergence, gradient, second_derivative, wavenumbers, Boundary, FftNd, GradientMethod};
use crate::grid::{ParticleSystem, WaveFunction};

/// `j_a = (ħ/m_a) Im Σ_s Ψ_s* ∂_a Ψ_s`, gradient chosen by the boundary.
pub fn probability_current(psi: &WaveFunction, sys: &ParticleSystem, boundary: Boundary) -> Vec<Vec<f64>> {
    probability_current_with(psi, sys, boundary, GradientMethod::for_boundary(boundary))
}

pub fn probability_current_with(
    psi: &WaveFunction,
    sys: &ParticleSystem,
    boundary: Boundary,
    method: GradientMethod,
) -> Vec<Vec<f64>> {
    let grid = psi.grid();
    let fft = (method == GradientMethod::Spectral).then(|| FftNd::new(grid));
    let mut current = vec![vec![0.0; grid.len()]; grid.dims()];
    for s in 0..psi.spin_components() {
        let comp = psi.component(s);
        let grad = gradient(grid, fft.as_ref(), comp, method, boundary);
        for (a, g) in grad.iter().enumerate() {
            let scale = sys.hbar() / sys.axis_mass(a);
            for ((j, z), dz) in current[a].iter_mut().zip(comp).zip(g) {
                *j += scale * (z.conj() * dz).im;
            }
        }
    }
    current
}

/// Residual of the continuity equation on the middle of three frames.
#[derive(Clone, Debug)]
pub struct ContinuityResidual {
    pub field: Vec<f64>,
    /// L² norm of `field` over the grid.
    pub norm: f64,
    pub time: f64,
}

/// `∂ρ/∂t + Σ_a ∂_a j_a` by a central time difference around the middle frame.
pub fn continuity_residual(
    frames: &[WaveFunction],
    sys: &ParticleSystem,
    boundary: Boundary,
) -> Result<ContinuityResidual, PropagatorError> {
    if frames.len() < 3 {
        return Err(PropagatorError::Incompatible(format!("continuity residual needs 3 frames, got {}", frames.len())));
    }
    let mid = frames.len() / 2;
    let (prev, cur, next) = (&frames[mid - 1], &frames[mid], &frames[mid + 1]);
    prev.check_compatible(cur)?;
    cur.check_compatible(next)?;
    let (dt_a, dt_b) = (cur.time() - prev.time(), next.time() - cur.time());
    if !(dt_a > 0.0) || (dt_a - dt_b).abs() > 1e-9 * dt_a.abs() {
        return Err(PropagatorError::Incompatible("continuity residual needs equally spaced, increasing frame times".into()));
    }
    let grid = cur.grid();
    let method = GradientMethod::for_boundary(boundary);
    let fft = (method == GradientMethod::Spectral).then(|| FftNd::new(grid));
    let j = probability_current_with(cur, sys, boundary, method);
    let div = divergence(grid, fft.as_ref(), &j, method, boundary);
    let field: Vec<f64> = next
        .density()
        .iter()
        .zip(prev.density())
        .zip(&div)
        .map(|((rn, rp), d)| (rn - rp) / (dt_a + dt_b) + d)
        .collect();
    let norm = (field.iter().map(|r| r * r).sum::<f64>() * grid.cell_volume()).sqrt();
    Ok(ContinuityResidual { field, norm, time: cur.time() })
}

/// `⟨Ψ|H|Ψ⟩` with the kinetic term matched to the backend's discretization.
pub fn energy(psi: &WaveFunction, sys: &ParticleSystem, potential: &Potential, boundary: Boundary) -> f64 {
    let grid = psi.grid();
    let v = potential.values_at(grid, sys, psi.time());
    let dv = grid.cell_volume();
    let mut total = 0.0;
    for s in 0..psi.spin_components() {
        let comp = psi.component(s);
        total += comp.iter().zip(&v).map(|(z, x)| z.norm_sqr() * x).sum::<f64>() * dv;
        match boundary {
            Boundary::Periodic => {
                let fft = FftNd::new(grid);
                let mut hat = comp.to_vec();
                fft.forward(&mut hat);
                let strides = grid.strides();
                let ks: Vec<Vec<f64>> =
                    (0..grid.dims()).map(|a| wavenumbers(grid.axis(a).points, grid.axis(a).spacing())).collect();
                // Parseval: Σ|ψ|² dV = Σ|ψ̂|² dV / N
                let kin: f64 = hat
                    .iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let e: f64 = (0..grid.dims())
                            .map(|a| {
                                let k = ks[a][(i / strides[a]) % grid.axis(a).points];
                                sys.hbar() * sys.hbar() * k * k / (2.0 * sys.axis_mass(a))
                            })
                            .sum();
                        e * z.norm_sqr()
                    })
                    .sum();
                total += kin * dv / grid.len() as f64;
            }
            Boundary::DirichletZero => {
                for a in 0..grid.dims() {
                    let d2 = second_derivative(grid, comp, a, boundary);
                    let coef = sys.hbar() * sys.hbar() / (2.0 * sys.axis_mass(a));
                    let k: Complex64 = comp.iter().zip(&d2).map(|(z, d)| z.conj() * d).sum();
                    total -= coef * k.re * dv;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn plane_wave_current_is_uniform() {
        let g = make_grid(&[(0.0, 2.0 * PI)], &[64]).unwrap();
        let k = 3.0;
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::from_polar(1.0, k * q[0])).unwrap().normalize().unwrap();
        let j = probability_current(&psi, &ParticleSystem::natural(1), Boundary::Periodic);
        for x in &j[0] {
            assert!((x - k / (2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn real_state_carries_no_current() {
        let g = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::new((PI * q[0]).sin(), 0.0)).unwrap();
        let j = probability_current(&psi, &ParticleSystem::natural(1), Boundary::DirichletZero);
        assert!(j[0].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn box_ground_state_energy() {
        let g = make_grid(&[(0.0, 1.0)], &[256]).unwrap();
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::new((PI * q[0]).sin(), 0.0)).unwrap().normalize().unwrap();
        let e = energy(&psi, &ParticleSystem::natural(1), &Potential::Free, Boundary::DirichletZero);
        assert!((e - PI * PI / 2.0).abs() < 1e-4, "{e}");
    }

    #[test]
    fn too_few_frames_is_an_error() {
        let g = make_grid(&[(0.0, 1.0)], &[16]).unwrap();
        let psi = WaveFunction::zeros(&g, 1, 0.0);
        assert!(continuity_residual(&[psi.clone(), psi], &ParticleSystem::natural(1), Boundary::Periodic).is_err());
    }
}
