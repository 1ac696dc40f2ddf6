use num_complex::Complex64;

use super::GuidanceError;
use crate::derivatives::{gradient, Boundary, FftNd, GradientMethod};
use crate::grid::{Configuration, Grid, ParticleSystem, WaveFunction};

/// Default node threshold, relative to the frame's maximum density.
pub const DEFAULT_NODE_EPSILON: f64 = 1e-12;

/// A frame prepared for velocity queries: Ψ and ∇Ψ on the grid, interleaved
/// per point as `[Ψ_s, ∂_0Ψ_s, …, ∂_{D-1}Ψ_s]` for every spin component.
#[derive(Clone, Debug)]
pub struct GuidanceField {
    grid: Grid,
    boundary: Boundary,
    spin: usize,
    strides: [usize; 3],
    inv_spacing: [f64; 3],
    data: Vec<Complex64>,
    hbar_over_mass: Vec<f64>,
    max_density: f64,
    time: f64,
}

/// Interpolated values at one configuration.
#[derive(Clone, Copy, Debug)]
struct Probe {
    density: f64,
    /// Im Σ_s Ψ_s* ∂_a Ψ_s per axis.
    flux: [f64; 3],
}

impl GuidanceField {
    pub fn new(psi: &WaveFunction, sys: &ParticleSystem, boundary: Boundary) -> Result<Self, GuidanceError> {
        Self::with_method(psi, sys, boundary, GradientMethod::for_boundary(boundary))
    }

    pub fn with_method(
        psi: &WaveFunction,
        sys: &ParticleSystem,
        boundary: Boundary,
        method: GradientMethod,
    ) -> Result<Self, GuidanceError> {
        let fft = (method == GradientMethod::Spectral).then(|| FftNd::new(psi.grid()));
        Self::build(psi, sys, boundary, method, fft.as_ref())
    }

    /// Like [`GuidanceField::with_method`], reusing a planned transform for the grid.
    pub(crate) fn build(
        psi: &WaveFunction,
        sys: &ParticleSystem,
        boundary: Boundary,
        method: GradientMethod,
        fft: Option<&FftNd>,
    ) -> Result<Self, GuidanceError> {
        let grid = psi.grid().clone();
        sys.check_grid(&grid)?;
        let d = grid.dims();
        let n = grid.len();
        let spin = psi.spin_components();
        let per_point = spin * (1 + d);
        let mut data = vec![Complex64::new(0.0, 0.0); n * per_point];
        for s in 0..spin {
            let comp = psi.component(s);
            let grad = gradient(&grid, fft, comp, method, boundary);
            for i in 0..n {
                let base = i * per_point + s * (1 + d);
                data[base] = comp[i];
                for a in 0..d {
                    data[base + 1 + a] = grad[a][i];
                }
            }
        }
        let max_density = psi.density().into_iter().fold(0.0, f64::max);
        let mut strides = [0; 3];
        strides[..d].copy_from_slice(&grid.strides());
        let mut inv_spacing = [0.0; 3];
        for (a, h) in grid.spacing().into_iter().enumerate() {
            inv_spacing[a] = 1.0 / h;
        }
        Ok(Self {
            grid,
            boundary,
            spin,
            strides,
            inv_spacing,
            data,
            hbar_over_mass: sys.axis_hbar_over_mass(),
            max_density,
            time: psi.time(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }

    /// Smallest grid spacing.
    pub fn min_spacing(&self) -> f64 {
        self.grid.spacing().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Trilinear interpolation of Ψ and ∇Ψ at `q`, contracted to density and flux.
    fn probe(&self, q: &[f64]) -> Result<Probe, GuidanceError> {
        if q.len() != self.grid.dims() {
            return Err(GuidanceError::OutOfDomain(self.grid.check_point(q).unwrap_err()));
        }
        match q.len() {
            1 => self.probe_dims::<1>(q),
            2 => self.probe_dims::<2>(q),
            _ => self.probe_dims::<3>(q),
        }
    }

    fn probe_dims<const D: usize>(&self, q: &[f64]) -> Result<Probe, GuidanceError> {
        // per axis: two (index, weight, mirrored) corners
        let mut corners = [[(0usize, 0.0f64, false); 2]; D];
        for a in 0..D {
            let ax = self.grid.axis(a);
            let x = q[a];
            if !(x >= ax.min && x <= ax.max) {
                return Err(GuidanceError::OutOfDomain(self.grid.check_point(q).unwrap_err()));
            }
            let n = ax.points as isize;
            let u = (x - ax.min) * self.inv_spacing[a] - 0.5;
            // u >= -0.5, so truncation needs at most one correction
            let mut i0 = u as isize;
            if (i0 as f64) > u {
                i0 -= 1;
            }
            let frac = u - i0 as f64;
            for (c, (j, w)) in [(i0, 1.0 - frac), (i0 + 1, frac)].into_iter().enumerate() {
                corners[a][c] = match self.boundary {
                    Boundary::Periodic => {
                        let j = if j < 0 { j + n } else if j >= n { j - n } else { j };
                        (j as usize, w, false)
                    }
                    Boundary::DirichletZero => {
                        if j < 0 {
                            ((-1 - j) as usize, w, true)
                        } else if j >= n {
                            ((2 * n - 1 - j) as usize, w, true)
                        } else {
                            (j as usize, w, false)
                        }
                    }
                };
            }
        }
        let per_comp = 1 + D;
        let per_point = self.spin * per_comp;
        let mut density = 0.0;
        let mut flux = [0.0; 3];
        for s in 0..self.spin {
            let mut psi = Complex64::new(0.0, 0.0);
            let mut grad = [Complex64::new(0.0, 0.0); D];
            for corner in 0..(1usize << D) {
                let mut flat = 0usize;
                let mut w = 1.0;
                let mut mirror = [false; D];
                for a in 0..D {
                    let (j, wa, m) = corners[a][(corner >> a) & 1];
                    flat += j * self.strides[a];
                    w *= wa;
                    mirror[a] = m;
                }
                if w == 0.0 {
                    continue;
                }
                let off = flat * per_point + s * per_comp;
                let vals = &self.data[off..off + per_comp];
                // odd reflection: Ψ and tangential derivatives flip, the normal derivative does not
                let psi_sign = if mirror.iter().filter(|m| **m).count() % 2 == 1 { -w } else { w };
                psi += vals[0] * psi_sign;
                for a in 0..D {
                    grad[a] += vals[1 + a] * if mirror[a] { -psi_sign } else { psi_sign };
                }
            }
            density += psi.norm_sqr();
            for a in 0..D {
                flux[a] += (psi.conj() * grad[a]).im;
            }
        }
        Ok(Probe { density, flux })
    }

    /// Interpolated density Σ_s|Ψ_s|² at `q`.
    pub fn density_at(&self, q: &[f64]) -> Result<f64, GuidanceError> {
        Ok(self.probe(q)?.density)
    }

    /// Guidance velocity at `q`; fails inside the node threshold.
    pub fn velocity(&self, q: &[f64], node_epsilon: f64) -> Result<[f64; 3], GuidanceError> {
        let p = self.probe(q)?;
        let threshold = node_epsilon * self.max_density;
        if !(p.density > threshold) {
            return Err(GuidanceError::NodeProximity { density: p.density, threshold });
        }
        let mut v = [0.0; 3];
        for (a, h) in self.hbar_over_mass.iter().enumerate() {
            v[a] = h * p.flux[a] / p.density;
        }
        Ok(v)
    }

    /// Velocity at every grid node; nodes below the threshold give `None`.
    pub fn velocity_on_grid(&self, node_epsilon: f64) -> Vec<Option<Vec<f64>>> {
        let d = self.grid.dims();
        let per_comp = 1 + d;
        let per_point = self.spin * per_comp;
        let threshold = node_epsilon * self.max_density;
        (0..self.grid.len())
            .map(|i| {
                let base = i * per_point;
                let mut density = 0.0;
                let mut flux = vec![0.0; d];
                for s in 0..self.spin {
                    let psi = self.data[base + s * per_comp];
                    density += psi.norm_sqr();
                    for (a, f) in flux.iter_mut().enumerate() {
                        *f += (psi.conj() * self.data[base + s * per_comp + 1 + a]).im;
                    }
                }
                (density > threshold).then(|| flux.iter().zip(&self.hbar_over_mass).map(|(f, h)| h * f / density).collect())
            })
            .collect()
    }
}

fn check_config(psi: &WaveFunction, q: &Configuration) -> Result<(), GuidanceError> {
    if q.dims() != psi.grid().dims() {
        return Err(GuidanceError::Grid(crate::grid::GridError::ConfigurationDims {
            got: q.dims(),
            expected: psi.grid().dims(),
        }));
    }
    Ok(())
}

/// `v_a = (ħ/m_a) Im(∂_aΨ/Ψ)` at `q` (spin components summed when present).
pub fn velocity_field(
    psi: &WaveFunction,
    sys: &ParticleSystem,
    boundary: Boundary,
    q: &Configuration,
) -> Result<Vec<f64>, GuidanceError> {
    check_config(psi, q)?;
    let field = GuidanceField::new(psi, sys, boundary)?;
    let v = field.velocity(&q.coords, DEFAULT_NODE_EPSILON)?;
    Ok(v[..q.dims()].to_vec())
}

/// `v_a = (ħ/m_a) Im[Σ_s Ψ_s* ∂_aΨ_s / Σ_s Ψ_s* Ψ_s]` for spinor wave functions.
pub fn velocity_field_spinor(
    psi: &WaveFunction,
    sys: &ParticleSystem,
    boundary: Boundary,
    q: &Configuration,
) -> Result<Vec<f64>, GuidanceError> {
    if psi.spin_components() < 2 {
        return Err(GuidanceError::SpinorRequired(psi.spin_components()));
    }
    velocity_field(psi, sys, boundary, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn ring() -> Grid {
        make_grid(&[(0.0, 2.0 * PI)], &[64]).unwrap()
    }

    #[test]
    fn plane_wave_velocity_is_k() {
        let psi = WaveFunction::from_fn(&ring(), 0.0, |q| Complex64::from_polar(1.0, 2.0 * q[0])).unwrap().normalize().unwrap();
        let sys = ParticleSystem::natural(1);
        for x in [0.0, 0.37, 3.0, 2.0 * PI] {
            let v = velocity_field(&psi, &sys, Boundary::Periodic, &Configuration::new(vec![x], 0.0)).unwrap();
            assert!((v[0] - 2.0).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn standing_wave_and_real_states_do_not_move() {
        let sys = ParticleSystem::natural(1);
        let standing = WaveFunction::from_fn(&ring(), 0.0, |q| {
            Complex64::from_polar(1.0, 2.0 * q[0]) + Complex64::from_polar(1.0, -2.0 * q[0])
        })
        .unwrap();
        for x in [0.3, 1.0, 2.0] {
            let v = velocity_field(&standing, &sys, Boundary::Periodic, &Configuration::new(vec![x], 0.0)).unwrap();
            assert!(v[0].abs() < 1e-12);
        }
        let real = WaveFunction::from_fn(&ring(), 0.0, |q| Complex64::new((q[0] - 3.0).powi(2).mul_add(-0.5, 0.2).exp(), 0.0)).unwrap();
        let v = velocity_field(&real, &sys, Boundary::Periodic, &Configuration::new(vec![2.5], 0.0)).unwrap();
        assert!(v[0].abs() < 1e-12);
    }

    #[test]
    fn complex_scale_cancels() {
        let sys = ParticleSystem::natural(1);
        let psi = WaveFunction::from_fn(&ring(), 0.0, |q| Complex64::new(q[0].sin() + 1.5, q[0].cos())).unwrap();
        let c = Complex64::new(3.0, 4.0);
        let q = Configuration::new(vec![1.234], 0.0);
        let v1 = velocity_field(&psi, &sys, Boundary::Periodic, &q).unwrap();
        let v2 = velocity_field(&psi.scaled(c), &sys, Boundary::Periodic, &q).unwrap();
        assert!((v1[0] - v2[0]).abs() <= 1e-12 * v1[0].abs().max(1.0));
    }

    #[test]
    fn spinor_reductions() {
        let sys = ParticleSystem::natural(1);
        let k = 2.0;
        let g = ring();
        let scalar = WaveFunction::from_fn(&g, 0.0, |q| Complex64::new(q[0].sin() + 1.5, q[0].cos())).unwrap();
        let padded = WaveFunction::from_spinor_fns(&g, 0.0, &[&|q: &[f64]| Complex64::new(q[0].sin() + 1.5, q[0].cos()), &|_: &[f64]| Complex64::new(0.0, 0.0)]).unwrap();
        let q = Configuration::new(vec![0.8], 0.0);
        let a = velocity_field(&scalar, &sys, Boundary::Periodic, &q).unwrap();
        let b = velocity_field_spinor(&padded, &sys, Boundary::Periodic, &q).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14);

        let counter = WaveFunction::from_spinor_fns(&g, 0.0, &[&|q: &[f64]| Complex64::from_polar(1.0, k * q[0]), &|q: &[f64]| Complex64::from_polar(1.0, -k * q[0])]).unwrap();
        let co = WaveFunction::from_spinor_fns(&g, 0.0, &[&|q: &[f64]| Complex64::from_polar(1.0, k * q[0]), &|q: &[f64]| Complex64::from_polar(1.0, k * q[0])]).unwrap();
        for x in [0.1, 2.2, 5.0] {
            let q = Configuration::new(vec![x], 0.0);
            assert!(velocity_field_spinor(&counter, &sys, Boundary::Periodic, &q).unwrap()[0].abs() < 1e-12);
            assert!((velocity_field_spinor(&co, &sys, Boundary::Periodic, &q).unwrap()[0] - k).abs() < 1e-12);
        }
        assert!(matches!(
            velocity_field_spinor(&scalar, &sys, Boundary::Periodic, &q),
            Err(GuidanceError::SpinorRequired(1))
        ));
    }

    #[test]
    fn node_and_domain_errors() {
        let sys = ParticleSystem::natural(1);
        let g = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::new((2.0 * PI * q[0]).sin(), 0.0)).unwrap();
        // the sine vanishes on the wall itself
        assert!(matches!(
            velocity_field(&psi, &sys, Boundary::DirichletZero, &Configuration::new(vec![0.0], 0.0)),
            Err(GuidanceError::NodeProximity { .. })
        ));
        assert!(matches!(
            velocity_field(&psi, &sys, Boundary::DirichletZero, &Configuration::new(vec![1.5], 0.0)),
            Err(GuidanceError::OutOfDomain(_))
        ));
    }

    #[test]
    fn interpolation_is_exact_for_plane_waves_between_nodes_2d() {
        let g = make_grid(&[(0.0, 2.0 * PI), (0.0, 2.0 * PI)], &[32, 32]).unwrap();
        let sys = ParticleSystem::natural(2);
        let psi = WaveFunction::from_fn(&g, 0.0, |q| Complex64::from_polar(1.0, 3.0 * q[0] - q[1])).unwrap();
        let field = GuidanceField::new(&psi, &sys, Boundary::Periodic).unwrap();
        let v = field.velocity(&[1.111, 6.2], DEFAULT_NODE_EPSILON).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-10 && (v[1] + 1.0).abs() < 1e-10);
    }
}
