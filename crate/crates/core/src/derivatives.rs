//! Spatial derivatives on grids: n-dimensional FFTs, spectral gradients and
//! finite-difference stencils with periodic or odd-reflection (Dirichlet) ghosts.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;

/// Boundary closure of the computational box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    /// The wave function vanishes on the box faces. Ghost cells are odd
    /// reflections about the faces, which puts the zero exactly on `min`/`max`.
    DirichletZero,
}

/// How a gradient field is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    Spectral,
    Central2,
    Central4,
}

impl GradientMethod {
    /// Default pairing: spectral on periodic boxes, fourth-order stencils against walls.
    pub fn for_boundary(boundary: Boundary) -> Self {
        match boundary {
            Boundary::Periodic => GradientMethod::Spectral,
            Boundary::DirichletZero => GradientMethod::Central4,
        }
    }
}

/// Angular wavenumbers in FFT order for an axis of `n` points and spacing `h`.
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let scale = 2.0 * PI / (n as f64 * h);
    (0..n)
        .map(|j| {
            let m = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
            m * scale
        })
        .collect()
}

/// Planned forward/inverse FFTs along every axis of a grid.
#[derive(Clone)]
pub struct FftNd {
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("shape", &self.shape).finish()
    }
}

impl FftNd {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let shape = grid.points();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self { strides: grid.strides(), shape, forward, inverse }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.forward[a]);
        }
    }

    /// Inverse transform in place, including the 1/N factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for a in 0..self.shape.len() {
            self.transform_axis(data, a, &self.inverse[a]);
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn transform_axis(&self, data: &mut [Complex64], a: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.shape[a];
        let stride = self.strides[a];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if stride == 1 {
            fft.process_with_scratch(data, &mut scratch);
            return;
        }
        let block = n * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for chunk in data.chunks_mut(block) {
            for inner in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = chunk[inner + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    chunk[inner + j * stride] = *v;
                }
            }
        }
    }
}

/// Spectral derivative along every axis of one scalar field.
///
/// The Nyquist mode of an odd derivative is dropped so real fields have real gradients.
pub fn spectral_gradient(grid: &Grid, fft: &FftNd, field: &[Complex64]) -> Vec<Vec<Complex64>> {
    let mut hat = field.to_vec();
    fft.forward(&mut hat);
    let strides = grid.strides();
    (0..grid.dims())
        .map(|a| {
            let ax = grid.axis(a);
            let n = ax.points;
            let mut k = wavenumbers(n, ax.spacing());
            if n % 2 == 0 {
                k[n / 2] = 0.0;
            }
            let stride = strides[a];
            let mut d: Vec<Complex64> = hat
                .iter()
                .enumerate()
                .map(|(i, z)| z * Complex64::new(0.0, k[(i / stride) % n]))
                .collect();
            fft.inverse(&mut d);
            d
        })
        .collect()
}

#[inline]
fn ghost(field: &[Complex64], base: usize, stride: usize, n: usize, j: isize, boundary: Boundary) -> Complex64 {
    let n_i = n as isize;
    match boundary {
        Boundary::Periodic => field[base + (j.rem_euclid(n_i) as usize) * stride],
        Boundary::DirichletZero => {
            if j < 0 {
                -field[base + ((-1 - j) as usize) * stride]
            } else if j >= n_i {
                -field[base + ((2 * n_i - 1 - j) as usize) * stride]
            } else {
                field[base + j as usize * stride]
            }
        }
    }
}

/// Central-difference derivative of `field` along axis `a`.
pub fn central_derivative(
    grid: &Grid,
    field: &[Complex64],
    a: usize,
    order: usize,
    boundary: Boundary,
) -> Vec<Complex64> {
    let ax = grid.axis(a);
    let n = ax.points;
    let h = ax.spacing();
    let stride = grid.strides()[a];
    let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let j = ((idx / stride) % n) as isize;
        let base = idx - (j as usize) * stride;
        let g = |off: isize| ghost(field, base, stride, n, j + off, boundary);
        *o = match order {
            2 => (g(1) - g(-1)) / (2.0 * h),
            _ => (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * h),
        };
    }
    out
}

/// Second-order Laplacian-type second derivative along axis `a`.
pub fn second_derivative(grid: &Grid, field: &[Complex64], a: usize, boundary: Boundary) -> Vec<Complex64> {
    let ax = grid.axis(a);
    let n = ax.points;
    let h2 = ax.spacing() * ax.spacing();
    let stride = grid.strides()[a];
    (0..field.len())
        .map(|idx| {
            let j = ((idx / stride) % n) as isize;
            let base = idx - (j as usize) * stride;
            let g = |off: isize| ghost(field, base, stride, n, j + off, boundary);
            (g(1) - 2.0 * g(0) + g(-1)) / h2
        })
        .collect()
}

/// Gradient of one scalar field by the requested method.
pub fn gradient(
    grid: &Grid,
    fft: Option<&FftNd>,
    field: &[Complex64],
    method: GradientMethod,
    boundary: Boundary,
) -> Vec<Vec<Complex64>> {
    match method {
        GradientMethod::Spectral => {
            let owned;
            let fft = match fft {
                Some(f) => f,
                None => {
                    owned = FftNd::new(grid);
                    &owned
                }
            };
            spectral_gradient(grid, fft, field)
        }
        GradientMethod::Central2 => (0..grid.dims()).map(|a| central_derivative(grid, field, a, 2, boundary)).collect(),
        GradientMethod::Central4 => (0..grid.dims()).map(|a| central_derivative(grid, field, a, 4, boundary)).collect(),
    }
}

/// Divergence of a real vector field (one component per axis).
pub fn divergence(grid: &Grid, fft: Option<&FftNd>, field: &[Vec<f64>], method: GradientMethod, boundary: Boundary) -> Vec<f64> {
    let mut div = vec![0.0; grid.len()];
    for (a, comp) in field.iter().enumerate() {
        let cz: Vec<Complex64> = comp.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let d = match method {
            GradientMethod::Spectral => {
                let owned;
                let fft = match fft {
                    Some(f) => f,
                    None => {
                        owned = FftNd::new(grid);
                        &owned
                    }
                };
                spectral_gradient(grid, fft, &cz).swap_remove(a)
            }
            GradientMethod::Central2 => central_derivative(grid, &cz, a, 2, boundary),
            GradientMethod::Central4 => central_derivative(grid, &cz, a, 4, boundary),
        };
        for (acc, z) in div.iter_mut().zip(d) {
            *acc += z.re;
        }
    }
    div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn fft_round_trip_2d() {
        let g = make_grid(&[(0.0, 1.0), (0.0, 2.0)], &[16, 32]).unwrap();
        let fft = FftNd::new(&g);
        let data: Vec<Complex64> = (0..g.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut work = data.clone();
        fft.forward(&mut work);
        fft.inverse(&mut work);
        for (a, b) in work.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_gradient_of_plane_wave_is_exact() {
        let g = make_grid(&[(0.0, 2.0 * PI), (0.0, 2.0 * PI)], &[32, 16]).unwrap();
        let fft = FftNd::new(&g);
        let f: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let q = g.coords_of(i);
                Complex64::from_polar(1.0, 3.0 * q[0] - 2.0 * q[1])
            })
            .collect();
        let grad = spectral_gradient(&g, &fft, &f);
        for i in 0..g.len() {
            assert!((grad[0][i] - Complex64::new(0.0, 3.0) * f[i]).norm() < 1e-11);
            assert!((grad[1][i] - Complex64::new(0.0, -2.0) * f[i]).norm() < 1e-11);
        }
    }

    #[test]
    fn dirichlet_ghosts_put_zero_on_the_walls() {
        // sin(πx) on [0,1] sampled at cell centres: odd reflection reproduces the sine.
        let g = make_grid(&[(0.0, 1.0)], &[64]).unwrap();
        let f: Vec<Complex64> = g.axis_coords(0).iter().map(|x| Complex64::new((PI * x).sin(), 0.0)).collect();
        let d = central_derivative(&g, &f, 0, 4, Boundary::DirichletZero);
        let h = g.spacing()[0];
        for (x, z) in g.axis_coords(0).iter().zip(&d) {
            assert!((z.re - PI * (PI * x).cos()).abs() < 5.0 * h.powi(4) * PI.powi(5));
            assert_eq!(z.im, 0.0);
        }
    }

    #[test]
    fn central_orders_converge() {
        let err = |n: usize, order: usize| {
            let g = make_grid(&[(0.0, 2.0 * PI)], &[n]).unwrap();
            let f: Vec<Complex64> = g.axis_coords(0).iter().map(|x| Complex64::new(x.sin(), 0.0)).collect();
            let d = central_derivative(&g, &f, 0, order, Boundary::Periodic);
            g.axis_coords(0).iter().zip(&d).map(|(x, z)| (z.re - x.cos()).abs()).fold(0.0, f64::max)
        };
        let r2 = err(32, 2) / err(64, 2);
        let r4 = err(32, 4) / err(64, 4);
        assert!((r2 - 4.0).abs() < 0.1, "{r2}");
        assert!((r4 - 16.0).abs() < 0.5, "{r4}");
    }

    #[test]
    fn wavenumber_layout() {
        let k = wavenumbers(8, 1.0);
        let s = 2.0 * PI / 8.0;
        assert_eq!(k, vec![0.0, s, 2.0 * s, 3.0 * s, -4.0 * s, -3.0 * s, -2.0 * s, -s]);
    }
}
