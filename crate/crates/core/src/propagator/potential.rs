use serde::{Deserialize, Serialize};

use super::PropagatorError;
use crate::grid::{Grid, ParticleSystem};

/// Default barrier height for slit screens, in natural units.
pub const DEFAULT_BARRIER_HEIGHT: f64 = 1.0e3;

/// Real potential energy on configuration space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// `Σ_a ½ m_a ω_a² (q_a − c_a)²`; a zero frequency leaves that axis free.
    Harmonic {
        omega: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Hard walls at the given per-axis positions. Realized by truncating the
    /// domain to the walls and using the Dirichlet boundary, so the grid
    /// extents must coincide with the walls.
    BoxWalls { walls: Vec<(f64, f64)> },
    SlitBarrier(SlitBarrier),
    /// Values at every grid point, row-major.
    GridSampled { values: Vec<f64> },
    PointerCoupling(PointerCoupling),
    Sum { terms: Vec<Potential> },
}

/// A wall across `axis` with openings along `transverse_axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlitBarrier {
    pub axis: usize,
    pub transverse_axis: usize,
    pub position: f64,
    pub thickness: f64,
    pub slit_centers: Vec<f64>,
    pub slit_widths: Vec<f64>,
    pub height: f64,
    /// Gaussian edge smoothing width; half a grid spacing when absent.
    #[serde(default)]
    pub smoothing: Option<f64>,
}

/// Shape of the subsystem operator `A` in a von Neumann coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingOperator {
    /// `A(x) = tanh((x − center) / width)`: −1 left of `center`, +1 right of it.
    SmoothSign { center: f64, width: f64 },
}

impl CouplingOperator {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            CouplingOperator::SmoothSign { center, width } => ((x - center) / width).tanh(),
        }
    }
}

/// Impulsive measurement coupling `g · A(x) · y`, switched on over `[t_on, t_off]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerCoupling {
    pub strength: f64,
    pub subsystem_axis: usize,
    pub operator: CouplingOperator,
    pub pointer_axis: usize,
    pub t_on: f64,
    pub t_off: f64,
}

impl PointerCoupling {
    /// Fraction of `[t0, t1]` covered by the active window.
    pub fn window_fraction(&self, t0: f64, t1: f64) -> f64 {
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        if hi <= lo {
            return if lo >= self.t_on && lo < self.t_off { 1.0 } else { 0.0 };
        }
        let overlap = (hi.min(self.t_off) - lo.max(self.t_on)).max(0.0);
        overlap / (hi - lo)
    }

    /// `g A(x) y` at every grid point, with the coupling fully on.
    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let q = grid.coords_of(i);
                self.strength * self.operator.value(q[self.subsystem_axis]) * q[self.pointer_axis]
            })
            .collect()
    }
}

fn smooth_indicator(x: f64, lo: f64, hi: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return if x >= lo && x <= hi { 1.0 } else { 0.0 };
    }
    let k = 1.0 / (std::f64::consts::SQRT_2 * s);
    0.5 * (libm::erf((x - lo) * k) - libm::erf((x - hi) * k))
}

impl SlitBarrier {
    pub fn value(&self, q: &[f64], grid: &Grid) -> f64 {
        let s = self.smoothing.unwrap_or_else(|| 0.5 * grid.axis(self.axis).spacing());
        let s_t = self.smoothing.unwrap_or_else(|| 0.5 * grid.axis(self.transverse_axis).spacing());
        let half = 0.5 * self.thickness;
        let wall = smooth_indicator(q[self.axis], self.position - half, self.position + half, s);
        if wall < 1e-300 {
            return 0.0;
        }
        let y = q[self.transverse_axis];
        let open: f64 = self
            .slit_centers
            .iter()
            .zip(&self.slit_widths)
            .map(|(&c, &w)| smooth_indicator(y, c - 0.5 * w, c + 0.5 * w, s_t))
            .sum();
        self.height * wall * (1.0 - open.min(1.0))
    }
}

impl Potential {
    pub fn validate(&self, grid: &Grid, sys: &ParticleSystem) -> Result<(), PropagatorError> {
        let bad = |m: String| Err(PropagatorError::InvalidPotential(m));
        let d = grid.dims();
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega, center } => {
                if omega.len() != d {
                    return bad(format!("harmonic potential needs {d} frequencies, got {}", omega.len()));
                }
                if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return bad("harmonic frequencies must be finite and non-negative".into());
                }
                if let Some(c) = center {
                    if c.len() != d {
                        return bad("harmonic center has wrong dimension".into());
                    }
                }
                Ok(())
            }
            Potential::BoxWalls { walls } => {
                if walls.len() != d {
                    return bad("box walls need one pair per axis".into());
                }
                for (a, &(lo, hi)) in walls.iter().enumerate() {
                    let ax = grid.axis(a);
                    let tol = 1e-9 * ax.length();
                    if (lo - ax.min).abs() > tol || (hi - ax.max).abs() > tol {
                        return bad(format!(
                            "box walls on axis {a} at ({lo}, {hi}) must coincide with the grid extents ({}, {})",
                            ax.min, ax.max
                        ));
                    }
                }
                Ok(())
            }
            Potential::SlitBarrier(b) => {
                if b.axis >= d || b.transverse_axis >= d || b.axis == b.transverse_axis {
                    return bad("slit barrier axes out of range".into());
                }
                if b.slit_centers.len() != b.slit_widths.len() {
                    return bad("slit centers and widths differ in length".into());
                }
                if !(b.height.is_finite() && b.thickness > 0.0 && b.slit_widths.iter().all(|w| *w > 0.0)) {
                    return bad("slit barrier needs finite height, positive thickness and widths".into());
                }
                Ok(())
            }
            Potential::GridSampled { values } => {
                if values.len() != grid.len() {
                    return bad(format!("sampled potential has {} values, grid has {}", values.len(), grid.len()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("sampled potential is not finite".into());
                }
                Ok(())
            }
            Potential::PointerCoupling(c) => {
                if c.subsystem_axis >= d || c.pointer_axis >= d || c.subsystem_axis == c.pointer_axis {
                    return bad("pointer coupling axes out of range".into());
                }
                if !(c.t_on < c.t_off) {
                    return bad(format!("pointer coupling window needs t_on < t_off, got [{}, {}]", c.t_on, c.t_off));
                }
                if !c.strength.is_finite() {
                    return bad("pointer coupling strength is not finite".into());
                }
                match c.operator {
                    CouplingOperator::SmoothSign { width, .. } if width > 0.0 => Ok(()),
                    _ => bad("coupling operator width must be positive".into()),
                }
            }
            Potential::Sum { terms } => {
                sys.check_grid(grid).map_err(|e| PropagatorError::InvalidPotential(e.to_string()))?;
                terms.iter().try_for_each(|t| t.validate(grid, sys))
            }
        }
    }

    /// True when the potential vanishes identically.
    pub fn is_free(&self) -> bool {
        match self {
            Potential::Free | Potential::BoxWalls { .. } => true,
            Potential::Harmonic { omega, .. } => omega.iter().all(|w| *w == 0.0),
            Potential::GridSampled { values } => values.iter().all(|v| *v == 0.0),
            Potential::PointerCoupling(c) => c.strength == 0.0,
            Potential::SlitBarrier(b) => b.height == 0.0,
            Potential::Sum { terms } => terms.iter().all(Potential::is_free),
        }
    }

    pub fn has_walls(&self) -> bool {
        match self {
            Potential::BoxWalls { .. } => true,
            Potential::Sum { terms } => terms.iter().any(Potential::has_walls),
            _ => false,
        }
    }

    /// Time-dependent pieces (pointer couplings).
    pub fn couplings(&self) -> Vec<&PointerCoupling> {
        match self {
            Potential::PointerCoupling(c) => vec![c],
            Potential::Sum { terms } => terms.iter().flat_map(Potential::couplings).collect(),
            _ => Vec::new(),
        }
    }

    /// The time-independent part at every grid point.
    pub fn static_values(&self, grid: &Grid, sys: &ParticleSystem) -> Vec<f64> {
        let n = grid.len();
        match self {
            Potential::Free | Potential::BoxWalls { .. } | Potential::PointerCoupling(_) => vec![0.0; n],
            Potential::Harmonic { omega, center } => (0..n)
                .map(|i| {
                    let q = grid.coords_of(i);
                    q.iter()
                        .enumerate()
                        .map(|(a, &x)| {
                            let c = center.as_ref().map_or(0.0, |c| c[a]);
                            0.5 * sys.axis_mass(a) * omega[a] * omega[a] * (x - c) * (x - c)
                        })
                        .sum()
                })
                .collect(),
            Potential::SlitBarrier(b) => (0..n).map(|i| b.value(&grid.coords_of(i), grid)).collect(),
            Potential::GridSampled { values } => values.clone(),
            Potential::Sum { terms } => {
                let mut acc = vec![0.0; n];
                for t in terms {
                    for (a, v) in acc.iter_mut().zip(t.static_values(grid, sys)) {
                        *a += v;
                    }
                }
                acc
            }
        }
    }

    /// Full potential at time `t`.
    pub fn values_at(&self, grid: &Grid, sys: &ParticleSystem, t: f64) -> Vec<f64> {
        let mut v = self.static_values(grid, sys);
        for c in self.couplings() {
            if t >= c.t_on && t < c.t_off {
                for (a, x) in v.iter_mut().zip(c.values(grid)) {
                    *a += x;
                }
            }
        }
        v
    }
}
