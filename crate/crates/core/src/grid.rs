//! Configuration-space lattices, particle bookkeeping and wave-function storage.
//!
//! Grids are uniform and cell-centred: axis `a` is split into `points[a]` cells of
//! width `(max - min) / points`, and sample `i` sits at the cell midpoint
//! `min + (i + 1/2) h`. All integrals are midpoint Riemann sums over those cells.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on configuration-space dimension.
pub const MAX_DIMS: usize = 3;

/// Default cap on the total number of grid points (16 Mi points, 256 MiB per scalar field).
pub const DEFAULT_MAX_POINTS: usize = 1 << 24;

const MIN_POINTS_PER_AXIS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("configuration space has {0} dimensions; at most {MAX_DIMS} are supported")]
    TooManyDimensions(usize),
    #[error("grid needs at least one axis")]
    NoAxes,
    #[error("axis {axis}: extent min {min} must be below max {max}")]
    BadExtent { axis: usize, min: f64, max: f64 },
    #[error("axis {axis}: {points} points requested, at least {MIN_POINTS_PER_AXIS} required")]
    TooFewPoints { axis: usize, points: usize },
    #[error("extents and point counts disagree in length ({extents} vs {points})")]
    ShapeMismatch { extents: usize, points: usize },
    #[error("grid of {requested} points exceeds the memory cap of {cap}")]
    MemoryCap { requested: usize, cap: usize },
    #[error("amplitude array has length {got}, expected {expected}")]
    AmplitudeLength { got: usize, expected: usize },
    #[error("wave function has non-finite amplitude at flat index {0}")]
    NonFinite(usize),
    #[error("wave function has zero norm")]
    ZeroNorm,
    #[error("wave functions live on different grids or spin spaces")]
    GridMismatch,
    #[error("tensor product needs scalar factors")]
    SpinorFactor,
    #[error("spin component count must be positive")]
    NoSpin,
    #[error("configuration has {got} coordinates, grid has {expected} axes")]
    ConfigurationDims { got: usize, expected: usize },
    #[error("coordinate {value} on axis {axis} lies outside [{min}, {max}]")]
    OutOfDomain { axis: usize, value: f64, min: f64, max: f64 },
    #[error("invalid particle system: {0}")]
    ParticleSystem(String),
}

/// One axis of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.points as f64
    }

    pub fn length(&self) -> f64 {
        self.max - self.min
    }

    /// Midpoint of cell `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.spacing()
    }
}

/// Uniform rectangular lattice over a box in configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

/// Build a grid with the default memory cap.
pub fn make_grid(extents: &[(f64, f64)], points: &[usize]) -> Result<Grid, GridError> {
    Grid::with_cap(extents, points, DEFAULT_MAX_POINTS)
}

impl Grid {
    pub fn new(extents: &[(f64, f64)], points: &[usize]) -> Result<Self, GridError> {
        make_grid(extents, points)
    }

    pub fn with_cap(extents: &[(f64, f64)], points: &[usize], cap: usize) -> Result<Self, GridError> {
        if extents.len() != points.len() {
            return Err(GridError::ShapeMismatch { extents: extents.len(), points: points.len() });
        }
        if extents.is_empty() {
            return Err(GridError::NoAxes);
        }
        if extents.len() > MAX_DIMS {
            return Err(GridError::TooManyDimensions(extents.len()));
        }
        let mut axes = Vec::with_capacity(extents.len());
        let mut total: usize = 1;
        for (axis, (&(min, max), &n)) in extents.iter().zip(points).enumerate() {
            if !(min.is_finite() && max.is_finite() && min < max) {
                return Err(GridError::BadExtent { axis, min, max });
            }
            if n < MIN_POINTS_PER_AXIS {
                return Err(GridError::TooFewPoints { axis, points: n });
            }
            total = total.saturating_mul(n);
            axes.push(Axis { min, max, points: n });
        }
        if total > cap {
            return Err(GridError::MemoryCap { requested: total, cap });
        }
        Ok(Self { axes })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn extents(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a.min, a.max)).collect()
    }

    pub fn points(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one cell, the quadrature weight.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// True when every axis has a power-of-two point count (spectral backend requirement).
    pub fn is_power_of_two(&self) -> bool {
        self.axes.iter().all(|a| a.points.is_power_of_two())
    }

    /// Row-major strides, axis 0 slowest.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for a in (0..self.dims().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.axes[a + 1].points;
        }
        strides
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    /// Multi-index of a flat position.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].points;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Cell-centre coordinates of a flat position.
    pub fn coords_of(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.coord(i))
            .collect()
    }

    pub fn axis_coords(&self, a: usize) -> Vec<f64> {
        let ax = &self.axes[a];
        (0..ax.points).map(|i| ax.coord(i)).collect()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dims() && q.iter().zip(&self.axes).all(|(&x, ax)| x >= ax.min && x <= ax.max)
    }

    pub fn check_point(&self, q: &[f64]) -> Result<(), GridError> {
        if q.len() != self.dims() {
            return Err(GridError::ConfigurationDims { got: q.len(), expected: self.dims() });
        }
        for (axis, (&value, ax)) in q.iter().zip(&self.axes).enumerate() {
            if !(value >= ax.min && value <= ax.max) {
                return Err(GridError::OutOfDomain { axis, value, min: ax.min, max: ax.max });
            }
        }
        Ok(())
    }

    /// Grid made of the axes of `self` followed by those of `other`.
    pub fn product(&self, other: &Grid) -> Result<Grid, GridError> {
        let dims = self.dims() + other.dims();
        if dims > MAX_DIMS {
            return Err(GridError::TooManyDimensions(dims));
        }
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().cloned());
        Ok(Grid { axes })
    }

    /// Grid keeping only the listed axes, in the given order.
    pub fn select(&self, keep: &[usize]) -> Grid {
        Grid { axes: keep.iter().map(|&a| self.axes[a].clone()).collect() }
    }
}

/// Particle content of a configuration space: masses, spatial dimensions and ħ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    masses: Vec<f64>,
    dims_per_particle: Vec<usize>,
    hbar: f64,
    /// Grid axis `a` carries component `axis_map[a].1` of particle `axis_map[a].0`.
    axis_map: Vec<(usize, usize)>,
}

impl ParticleSystem {
    /// Particles laid out particle-major over the grid axes.
    pub fn new(masses: Vec<f64>, dims_per_particle: Vec<usize>, hbar: f64) -> Result<Self, GridError> {
        let axis_map = dims_per_particle
            .iter()
            .enumerate()
            .flat_map(|(p, &d)| (0..d).map(move |c| (p, c)))
            .collect();
        Self::with_axis_map(masses, dims_per_particle, hbar, axis_map)
    }

    pub fn with_axis_map(
        masses: Vec<f64>,
        dims_per_particle: Vec<usize>,
        hbar: f64,
        axis_map: Vec<(usize, usize)>,
    ) -> Result<Self, GridError> {
        let bad = |m: String| Err(GridError::ParticleSystem(m));
        if masses.is_empty() {
            return bad("no particles".into());
        }
        if masses.len() != dims_per_particle.len() {
            return bad("masses and dims_per_particle differ in length".into());
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return bad(format!("mass must be positive, got {m}"));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return bad(format!("hbar must be positive, got {hbar}"));
        }
        if dims_per_particle.contains(&0) {
            return bad("every particle needs at least one spatial dimension".into());
        }
        let total: usize = dims_per_particle.iter().sum();
        if axis_map.len() != total {
            return bad(format!("axis map covers {} axes, particles need {total}", axis_map.len()));
        }
        let mut seen = axis_map.clone();
        seen.sort_unstable();
        seen.dedup();
        let valid = seen.len() == total
            && seen.iter().all(|&(p, c)| p < masses.len() && c < dims_per_particle[p]);
        if !valid {
            return bad("axis map is not a bijection onto (particle, component) pairs".into());
        }
        Ok(Self { masses, dims_per_particle, hbar, axis_map })
    }

    /// One particle of the given mass moving in `dims` dimensions, ħ = 1.
    pub fn single(mass: f64, dims: usize) -> Result<Self, GridError> {
        Self::new(vec![mass], vec![dims], 1.0)
    }

    /// Natural units: one particle, unit mass, ħ = 1.
    pub fn natural(dims: usize) -> Self {
        Self::single(1.0, dims).expect("unit mass system is valid")
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn dims_per_particle(&self) -> &[usize] {
        &self.dims_per_particle
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn axis_map(&self) -> &[(usize, usize)] {
        &self.axis_map
    }

    pub fn total_dims(&self) -> usize {
        self.axis_map.len()
    }

    /// Mass of the particle owning grid axis `a`.
    pub fn axis_mass(&self, a: usize) -> f64 {
        self.masses[self.axis_map[a].0]
    }

    /// `ħ / m` for each grid axis.
    pub fn axis_hbar_over_mass(&self) -> Vec<f64> {
        (0..self.total_dims()).map(|a| self.hbar / self.axis_mass(a)).collect()
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<(), GridError> {
        if grid.dims() != self.total_dims() {
            return Err(GridError::ParticleSystem(format!(
                "particles span {} axes, grid has {}",
                self.total_dims(),
                grid.dims()
            )));
        }
        Ok(())
    }
}

/// A point in configuration space at a time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub coords: Vec<f64>,
    pub time: f64,
}

impl Configuration {
    pub fn new(coords: Vec<f64>, time: f64) -> Self {
        Self { coords, time }
    }

    pub fn dims(&self) -> usize {
        self.coords.len()
    }
}

/// Complex amplitudes on a grid, optionally spinor-valued.
///
/// Amplitudes are stored component-major: component `s` occupies
/// `amplitudes[s * grid.len() .. (s + 1) * grid.len()]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    spin: usize,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, spin: usize, amplitudes: Vec<Complex64>, time: f64) -> Result<Self, GridError> {
        if spin == 0 {
            return Err(GridError::NoSpin);
        }
        let expected = grid.len() * spin;
        if amplitudes.len() != expected {
            return Err(GridError::AmplitudeLength { got: amplitudes.len(), expected });
        }
        if let Some(i) = amplitudes.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, spin, amplitudes, time })
    }

    /// Scalar wave function sampled from `f` at the cell centres.
    pub fn from_fn(grid: &Grid, time: f64, f: impl Fn(&[f64]) -> Complex64) -> Result<Self, GridError> {
        let amps = (0..grid.len()).map(|i| f(&grid.coords_of(i))).collect();
        Self::new(grid.clone(), 1, amps, time)
    }

    /// Spinor wave function with one sampling function per component.
    pub fn from_spinor_fns(
        grid: &Grid,
        time: f64,
        fs: &[&dyn Fn(&[f64]) -> Complex64],
    ) -> Result<Self, GridError> {
        let n = grid.len();
        let mut amps = Vec::with_capacity(n * fs.len());
        for f in fs {
            amps.extend((0..n).map(|i| f(&grid.coords_of(i))));
        }
        Self::new(grid.clone(), fs.len(), amps, time)
    }

    pub fn zeros(grid: &Grid, spin: usize, time: f64) -> Self {
        Self { grid: grid.clone(), spin: spin.max(1), amplitudes: vec![Complex64::new(0.0, 0.0); grid.len() * spin.max(1)], time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spin_components(&self) -> usize {
        self.spin
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn component(&self, s: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.amplitudes[s * n..(s + 1) * n]
    }

    pub fn component_mut(&mut self, s: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.amplitudes[s * n..(s + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    /// L² norm over all spin components.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Copy rescaled to unit norm; the phase is untouched.
    pub fn normalize(&self) -> Result<Self, GridError> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(GridError::ZeroNorm);
        }
        let mut out = self.clone();
        let inv = 1.0 / norm;
        out.amplitudes.iter_mut().for_each(|z| *z *= inv);
        Ok(out)
    }

    /// Σ_s |Ψ_s|² at every grid point.
    pub fn density(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut rho = vec![0.0; n];
        for s in 0..self.spin {
            for (r, z) in rho.iter_mut().zip(self.component(s)) {
                *r += z.norm_sqr();
            }
        }
        rho
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|z| *z *= c);
        out
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: Complex64, other: &WaveFunction, b: Complex64) -> Result<Self, GridError> {
        self.check_compatible(other)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self { grid: self.grid.clone(), spin: self.spin, amplitudes, time: self.time })
    }

    pub fn check_compatible(&self, other: &WaveFunction) -> Result<(), GridError> {
        if self.grid != other.grid || self.spin != other.spin {
            return Err(GridError::GridMismatch);
        }
        Ok(())
    }

    /// Hermitian inner product ⟨self, other⟩, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &WaveFunction) -> Result<Complex64, GridError> {
        inner_product(self, other)
    }

    /// L² distance ‖self − other‖.
    pub fn distance(&self, other: &WaveFunction) -> Result<f64, GridError> {
        self.check_compatible(other)?;
        let s: f64 = self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }
}

/// Rescale to unit L² norm.
pub fn normalize(psi: &WaveFunction) -> Result<WaveFunction, GridError> {
    psi.normalize()
}

/// Σ_s |Ψ_s|² on the grid.
pub fn density(psi: &WaveFunction) -> Vec<f64> {
    psi.density()
}

/// Riemann-sum Hermitian inner product.
pub fn inner_product(a: &WaveFunction, b: &WaveFunction) -> Result<Complex64, GridError> {
    a.check_compatible(b)?;
    let s: Complex64 = a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.grid.cell_volume())
}

/// Ψ(x, y) = a(x) b(y) on the product grid; `a`'s axes come first.
pub fn tensor_product(a: &WaveFunction, b: &WaveFunction) -> Result<WaveFunction, GridError> {
    if a.spin != 1 || b.spin != 1 {
        return Err(GridError::SpinorFactor);
    }
    let grid = a.grid.product(&b.grid)?;
    let mut amps = Vec::with_capacity(grid.len());
    for x in &a.amplitudes {
        amps.extend(b.amplitudes.iter().map(|y| x * y));
    }
    WaveFunction::new(grid, 1, amps, a.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn gaussian(grid: &Grid, center: f64, sigma: f64) -> WaveFunction {
        WaveFunction::from_fn(grid, 0.0, |q| c((-(q[0] - center).powi(2) / (4.0 * sigma * sigma)).exp()))
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn spacing_follows_extent_over_points() {
        let g = make_grid(&[(-10.0, 10.0)], &[256]).unwrap();
        assert_eq!(g.spacing(), vec![0.078125]);
        let g2 = make_grid(&[(-5.0, 5.0), (-5.0, 5.0)], &[128, 128]).unwrap();
        assert_eq!(g2.dims(), 2);
        assert_eq!(g2.spacing(), vec![0.078125, 0.078125]);
        assert!(g2.is_power_of_two());
    }

    #[test]
    fn grid_guards() {
        let four = [(-1.0, 1.0); 4];
        assert_eq!(make_grid(&four, &[8; 4]), Err(GridError::TooManyDimensions(4)));
        assert!(matches!(make_grid(&[(1.0, 1.0)], &[16]), Err(GridError::BadExtent { .. })));
        assert!(matches!(make_grid(&[(0.0, 1.0)], &[4]), Err(GridError::TooFewPoints { .. })));
        assert!(matches!(
            Grid::with_cap(&[(0.0, 1.0), (0.0, 1.0)], &[64, 64], 1000),
            Err(GridError::MemoryCap { .. })
        ));
        assert!(!make_grid(&[(0.0, 1.0)], &[24]).unwrap().is_power_of_two());
    }

    #[test]
    fn normalize_cases() {
        let g = make_grid(&[(0.0, 1.0)], &[256]).unwrap();
        let ones = WaveFunction::from_fn(&g, 0.0, |_| c(1.0)).unwrap();
        let n = ones.normalize().unwrap();
        assert!(n.amplitudes().iter().all(|z| (z.re - 1.0).abs() < 1e-12 && z.im == 0.0));

        let unit = gaussian(&make_grid(&[(-8.0, 8.0)], &[128]).unwrap(), 0.5, 1.0);
        let back = unit.scaled(c(2.0)).normalize().unwrap();
        assert!(back.distance(&unit).unwrap() < 1e-14);

        let zero = WaveFunction::zeros(&g, 1, 0.0);
        assert_eq!(zero.normalize(), Err(GridError::ZeroNorm));
    }

    #[test]
    fn density_cases() {
        let g = make_grid(&[(0.0, 2.0 * PI)], &[64]).unwrap();
        let k = 3.0;
        let pw = WaveFunction::from_fn(&g, 0.0, |q| Complex64::from_polar(1.0, k * q[0]))
            .unwrap()
            .normalize()
            .unwrap();
        for r in pw.density() {
            assert!((r - 1.0 / (2.0 * PI)).abs() < 1e-12);
        }
        let spinor = WaveFunction::from_spinor_fns(&g, 0.0, &[&|q: &[f64]| Complex64::from_polar(1.0, k * q[0]), &|_: &[f64]| c(0.0)])
            .unwrap()
            .normalize()
            .unwrap();
        for (a, b) in spinor.density().iter().zip(pw.density()) {
            assert!((a - b).abs() < 1e-14);
        }
        let gg = make_grid(&[(-10.0, 10.0)], &[512]).unwrap();
        let gauss = gaussian(&gg, 0.0, 1.0);
        let total: f64 = gauss.density().iter().sum::<f64>() * gg.cell_volume();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tensor_product_cases() {
        let gx = make_grid(&[(-8.0, 8.0)], &[64]).unwrap();
        let gy = make_grid(&[(-5.0, 11.0)], &[64]).unwrap();
        let a = gaussian(&gx, 0.0, 1.0);
        let b = gaussian(&gy, 3.0, 1.0);
        let ab = tensor_product(&a, &b).unwrap();
        assert!((ab.norm() - 1.0).abs() < 1e-9);
        let rho = ab.density();
        let (imax, _) = rho.iter().enumerate().fold((0, 0.0), |m, (i, &r)| if r > m.1 { (i, r) } else { m });
        let q = ab.grid().coords_of(imax);
        assert!(q[0].abs() < gx.spacing()[0] && (q[1] - 3.0).abs() < gy.spacing()[0]);

        let ones = WaveFunction::from_fn(&gy, 0.0, |_| c(1.0)).unwrap();
        let prod = tensor_product(&a, &ones).unwrap().normalize().unwrap();
        let ny = gy.axis(0).points;
        let hy = gy.spacing()[0];
        let rho = prod.density();
        for (i, ra) in a.density().iter().enumerate() {
            let marginal: f64 = rho[i * ny..(i + 1) * ny].iter().sum::<f64>() * hy;
            assert!((marginal - ra).abs() < 1e-12);
        }

        let g2 = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[8, 8]).unwrap();
        let big = WaveFunction::from_fn(&g2, 0.0, |_| c(1.0)).unwrap();
        assert_eq!(tensor_product(&big, &big), Err(GridError::TooManyDimensions(4)));
    }

    #[test]
    fn inner_product_cases() {
        let g = make_grid(&[(0.0, 1.0)], &[256]).unwrap();
        let s1 = WaveFunction::from_fn(&g, 0.0, |q| c((PI * q[0]).sin())).unwrap();
        let s2 = WaveFunction::from_fn(&g, 0.0, |q| c((2.0 * PI * q[0]).sin())).unwrap();
        assert!(inner_product(&s1, &s2).unwrap().norm() < 1e-9);
        let n1 = s1.normalize().unwrap();
        assert!((inner_product(&n1, &n1).unwrap() - c(1.0)).norm() < 1e-9);
        let i_n1 = n1.scaled(Complex64::i());
        assert!((inner_product(&n1, &i_n1).unwrap() - Complex64::i()).norm() < 1e-9);
        let other = make_grid(&[(0.0, 2.0)], &[256]).unwrap();
        let w = WaveFunction::zeros(&other, 1, 0.0);
        assert_eq!(inner_product(&n1, &w), Err(GridError::GridMismatch));
    }

    #[test]
    fn particle_system_validation() {
        assert!(ParticleSystem::new(vec![1.0, 1.0], vec![1, 1], 1.0).is_ok());
        assert!(ParticleSystem::new(vec![-1.0], vec![1], 1.0).is_err());
        assert!(ParticleSystem::new(vec![1.0], vec![1], 0.0).is_err());
        assert!(ParticleSystem::with_axis_map(vec![1.0, 2.0], vec![1, 1], 1.0, vec![(0, 0), (0, 0)]).is_err());
        let sys = ParticleSystem::with_axis_map(vec![1.0, 2.0], vec![1, 1], 1.0, vec![(1, 0), (0, 0)]).unwrap();
        assert_eq!(sys.axis_mass(0), 2.0);
    }

    #[test]
    fn flat_and_multi_index_agree() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], &[8, 16, 32]).unwrap();
        for flat in [0, 1, 31, 32, 511, 4095] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.strides(), vec![512, 32, 1]);
    }
}
