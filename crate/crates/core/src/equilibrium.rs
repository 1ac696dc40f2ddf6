//! Quantum-equilibrium sampling and equivariance statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Configuration, Grid, GridError, WaveFunction};

/// Samples per PRNG stream; fixes the work split so output is independent of thread count.
const CHUNK: usize = 4096;
/// Stream offset for null-calibration replicates.
const NULL_STREAM_BASE: u64 = 1 << 32;
pub const NULL_REPLICATES: usize = 100;
pub const MIN_TEST_SAMPLES: usize = 1000;
pub const MAX_BINS_PER_AXIS: usize = 64;
/// Cells below this fraction of the peak density do not widen the binning range.
const SUPPORT_EPSILON: f64 = 1e-12;
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("wave function is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("need at least one sample")]
    NoSamples,
    #[error("equivariance test needs at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("{bins} bins exceed n/10 = {limit}")]
    TooManyBins { bins: usize, limit: usize },
    #[error("reference density is empty or invalid")]
    BadDensity,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A seeded ChaCha8 generator on a numbered stream.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub configurations: Vec<Configuration>,
    pub seed: u64,
    pub source_time: f64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.configurations.iter().map(|c| c.coords.clone()).collect()
    }
}

/// Cumulative cell masses of a density on a grid, used for inverse-CDF draws.
#[derive(Clone, Debug)]
pub struct CellSampler {
    grid: Grid,
    cdf: Vec<f64>,
}

impl CellSampler {
    pub fn new(grid: &Grid, density: &[f64]) -> Result<Self, EquilibriumError> {
        if density.len() != grid.len() || density.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(EquilibriumError::BadDensity);
        }
        let mut acc = 0.0;
        let cdf: Vec<f64> = density
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(EquilibriumError::BadDensity);
        }
        Ok(Self { grid: grid.clone(), cdf })
    }

    pub fn cell(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cdf.last().expect("non-empty grid");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1)
    }

    /// A cell drawn by mass, then a uniform point inside it.
    pub fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let cell = self.cell(rng);
        let idx = self.grid.multi_index(cell);
        idx.iter()
            .zip(self.grid.axes())
            .map(|(&i, ax)| {
                let h = ax.spacing();
                let lo = ax.min + i as f64 * h;
                // clamp guards the rare rounding of lo + h·u up to the next cell
                (lo + h * rng.random::<f64>()).min(lo + h * (1.0 - f64::EPSILON))
            })
            .collect()
    }

    /// `n` draws split into fixed-size PRNG streams starting at `stream0`.
    pub fn draw_many(&self, n: usize, seed: u64, stream0: u64) -> Vec<Vec<f64>> {
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = rng_stream(seed, stream0 + c as u64);
                let count = CHUNK.min(n - c * CHUNK);
                (0..count).map(move |_| self.draw(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }
}

fn check_normalized(psi: &WaveFunction) -> Result<(), EquilibriumError> {
    let norm = psi.norm();
    if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
        return Err(EquilibriumError::NotNormalized(norm));
    }
    Ok(())
}

/// `n` i.i.d. draws from the grid-discretized `|Ψ|²`.
pub fn sample_equilibrium(psi: &WaveFunction, n: usize, seed: u64) -> Result<SampleSet, EquilibriumError> {
    check_normalized(psi)?;
    if n == 0 {
        return Err(EquilibriumError::NoSamples);
    }
    let sampler = CellSampler::new(psi.grid(), &psi.density())?;
    let t = psi.time();
    let configurations = sampler.draw_many(n, seed, 0).into_iter().map(|q| Configuration::new(q, t)).collect();
    Ok(SampleSet { configurations, seed, source_time: t })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    TotalVariationBinned,
    KsPerAxis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub statistic_kind: StatisticKind,
    pub value: f64,
    /// 99th percentile of the statistic under direct resampling.
    pub null_bound: f64,
    pub pass: bool,
    pub n_samples: usize,
    pub n_bins: usize,
    pub bins_per_axis: Vec<usize>,
    pub bin_range: Vec<(f64, f64)>,
    pub seed: u64,
    pub replicates: usize,
}

/// `⌈n^(1/(D+2))⌉`, capped at 64.
pub fn default_bins_per_axis(n: usize, dims: usize) -> usize {
    let b = (n as f64).powf(1.0 / (dims as f64 + 2.0)).ceil() as usize;
    b.clamp(1, MAX_BINS_PER_AXIS)
}

struct Binning {
    range: Vec<(f64, f64)>,
    bins: Vec<usize>,
}

impl Binning {
    fn bin_of(&self, a: usize, x: f64) -> usize {
        let (lo, hi) = self.range[a];
        let b = self.bins[a];
        let f = ((x - lo) / (hi - lo) * b as f64).floor();
        if f.is_nan() || f < 0.0 {
            0
        } else {
            (f as usize).min(b - 1)
        }
    }

    fn flat(&self, q: &[f64]) -> usize {
        q.iter().enumerate().fold(0, |acc, (a, &x)| acc * self.bins[a] + self.bin_of(a, x))
    }

    fn total(&self) -> usize {
        self.bins.iter().product()
    }

    /// Bin masses of a density that is uniform within each grid cell.
    fn masses(&self, grid: &Grid, density: &[f64]) -> Vec<f64> {
        let d = grid.dims();
        // per axis, per cell index: the bins the cell overlaps and the fractions
        let overlaps: Vec<Vec<Vec<(usize, f64)>>> = (0..d)
            .map(|a| {
                let ax = grid.axis(a);
                let h = ax.spacing();
                (0..ax.points)
                    .map(|i| {
                        let lo = ax.min + i as f64 * h;
                        let hi = lo + h;
                        let (b0, b1) = (self.bin_of(a, lo), self.bin_of(a, hi));
                        if b0 == b1 {
                            return vec![(b0, 1.0)];
                        }
                        let (rlo, rhi) = self.range[a];
                        let w = (rhi - rlo) / self.bins[a] as f64;
                        (b0..=b1)
                            .map(|b| {
                                let edge_lo = if b == 0 { f64::NEG_INFINITY } else { rlo + b as f64 * w };
                                let edge_hi = if b + 1 == self.bins[a] { f64::INFINITY } else { rlo + (b + 1) as f64 * w };
                                (b, ((hi.min(edge_hi) - lo.max(edge_lo)) / h).max(0.0))
                            })
                            .filter(|(_, f)| *f > 0.0)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![0.0; self.total()];
        let total: f64 = density.iter().sum();
        let strides = grid.strides();
        for (i, &p) in density.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let lists: Vec<&Vec<(usize, f64)>> = (0..d).map(|a| &overlaps[a][(i / strides[a]) % grid.axis(a).points]).collect();
            let mut combos = vec![(0usize, p / total)];
            for (a, list) in lists.iter().enumerate() {
                combos = combos
                    .into_iter()
                    .flat_map(|(flat, m)| list.iter().map(move |&(b, f)| (flat * self.bins[a] + b, m * f)))
                    .collect();
            }
            for (flat, m) in combos {
                out[flat] += m;
            }
        }
        out
    }
}

fn binning_for(grid: &Grid, density: &[f64], positions: &[Vec<f64>], bins: usize) -> Binning {
    let d = grid.dims();
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let mut range = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for (i, &p) in density.iter().enumerate() {
        if p >= SUPPORT_EPSILON * peak && p > 0.0 {
            let idx = grid.multi_index(i);
            for a in 0..d {
                let ax = grid.axis(a);
                let lo = ax.min + idx[a] as f64 * ax.spacing();
                range[a].0 = range[a].0.min(lo);
                range[a].1 = range[a].1.max(lo + ax.spacing());
            }
        }
    }
    for q in positions {
        for a in 0..d {
            if q[a].is_finite() {
                range[a].0 = range[a].0.min(q[a]);
                range[a].1 = range[a].1.max(q[a]);
            }
        }
    }
    for (a, r) in range.iter_mut().enumerate() {
        if !(r.1 > r.0) {
            *r = (grid.axis(a).min, grid.axis(a).max);
        }
    }
    Binning { range, bins: vec![bins; d] }
}

fn total_variation(counts: &[usize], n: usize, p: &[f64]) -> f64 {
    0.5 * counts.iter().zip(p).map(|(&c, &q)| (c as f64 / n as f64 - q).abs()).sum::<f64>()
}

fn marginal_cdfs(grid: &Grid, density: &[f64]) -> Vec<Vec<f64>> {
    let total: f64 = density.iter().sum();
    let strides = grid.strides();
    (0..grid.dims())
        .map(|a| {
            let n = grid.axis(a).points;
            let mut m = vec![0.0; n];
            for (i, p) in density.iter().enumerate() {
                m[(i / strides[a]) % n] += p / total;
            }
            let mut acc = 0.0;
            std::iter::once(0.0)
                .chain(m.iter().map(|x| {
                    acc += x;
                    acc
                }))
                .collect()
        })
        .collect()
}

/// Largest per-axis KS distance to the piecewise-linear marginal CDFs.
fn ks_statistic(grid: &Grid, cdfs: &[Vec<f64>], positions: &[Vec<f64>]) -> f64 {
    let n = positions.len() as f64;
    let mut worst = 0.0f64;
    for (a, cdf) in cdfs.iter().enumerate() {
        let ax = grid.axis(a);
        let h = ax.spacing();
        let model = |x: f64| -> f64 {
            let u = ((x - ax.min) / h).clamp(0.0, ax.points as f64);
            let i = (u.floor() as usize).min(ax.points - 1);
            cdf[i] + (cdf[i + 1] - cdf[i]) * (u - i as f64)
        };
        let mut xs: Vec<f64> = positions.iter().map(|q| q[a]).collect();
        xs.sort_by(f64::total_cmp);
        for (k, &x) in xs.iter().enumerate() {
            let f = model(x);
            worst = worst.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
        }
    }
    worst
}

/// Compare an ensemble against `|Ψ_t|²`.
pub fn equivariance_test(
    positions: &[Vec<f64>],
    psi_t: &WaveFunction,
    kind: StatisticKind,
    bins_per_axis: Option<usize>,
    seed: u64,
) -> Result<EquivarianceReport, EquilibriumError> {
    check_normalized(psi_t)?;
    equivariance_test_density(positions, psi_t.grid(), &psi_t.density(), kind, bins_per_axis, seed)
}

/// Compare an ensemble against an arbitrary non-negative grid density (normalized internally).
pub fn equivariance_test_density(
    positions: &[Vec<f64>],
    grid: &Grid,
    density: &[f64],
    kind: StatisticKind,
    bins_per_axis: Option<usize>,
    seed: u64,
) -> Result<EquivarianceReport, EquilibriumError> {
    let n = positions.len();
    if n < MIN_TEST_SAMPLES {
        return Err(EquilibriumError::TooFewSamples { got: n, min: MIN_TEST_SAMPLES });
    }
    let d = grid.dims();
    if let Some(q) = positions.iter().find(|q| q.len() != d) {
        return Err(GridError::ConfigurationDims { got: q.len(), expected: d }.into());
    }
    let sampler = CellSampler::new(grid, density)?;
    let bins = bins_per_axis.unwrap_or_else(|| default_bins_per_axis(n, d)).max(1);
    let binning = binning_for(grid, density, positions, bins);
    let total_bins = binning.total();
    if kind == StatisticKind::TotalVariationBinned && total_bins > n / 10 {
        return Err(EquilibriumError::TooManyBins { bins: total_bins, limit: n / 10 });
    }
    let (value, mut null): (f64, Vec<f64>) = match kind {
        StatisticKind::TotalVariationBinned => {
            let p = binning.masses(grid, density);
            let mut counts = vec![0usize; total_bins];
            for q in positions {
                counts[binning.flat(q)] += 1;
            }
            let value = total_variation(&counts, n, &p);
            let mut cdf = Vec::with_capacity(p.len());
            let mut acc = 0.0;
            for x in &p {
                acc += x;
                cdf.push(acc);
            }
            let null = (0..NULL_REPLICATES)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_stream(seed, NULL_STREAM_BASE + r as u64);
                    let mut c = vec![0usize; total_bins];
                    for _ in 0..n {
                        let u = rng.random::<f64>() * acc;
                        c[cdf.partition_point(|x| *x <= u).min(total_bins - 1)] += 1;
                    }
                    total_variation(&c, n, &p)
                })
                .collect();
            (value, null)
        }
        StatisticKind::KsPerAxis => {
            let cdfs = marginal_cdfs(grid, density);
            let value = ks_statistic(grid, &cdfs, positions);
            let null = (0..NULL_REPLICATES)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_stream(seed, NULL_STREAM_BASE + r as u64);
                    let sample: Vec<Vec<f64>> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
                    ks_statistic(grid, &cdfs, &sample)
                })
                .collect();
            (value, null)
        }
    };
    null.sort_by(f64::total_cmp);
    let null_bound = null[(NULL_REPLICATES * 99).div_ceil(100) - 1];
    Ok(EquivarianceReport {
        statistic_kind: kind,
        value,
        null_bound,
        pass: value <= null_bound,
        n_samples: n,
        n_bins: total_bins,
        bins_per_axis: binning.bins.clone(),
        bin_range: binning.range.clone(),
        seed,
        replicates: NULL_REPLICATES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use num_complex::Complex64;

    fn gaussian(sigma: f64) -> WaveFunction {
        let g = make_grid(&[(-10.0, 10.0)], &[512]).unwrap();
        WaveFunction::from_fn(&g, 0.0, |q| Complex64::new((-q[0] * q[0] / (4.0 * sigma * sigma)).exp(), 0.0))
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_unnormalized() {
        let psi = gaussian(1.0);
        let a = sample_equilibrium(&psi, 5000, 7).unwrap();
        let b = sample_equilibrium(&psi, 5000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_equilibrium(&psi, 5000, 8).unwrap());
        assert!(matches!(sample_equilibrium(&psi.scaled(Complex64::new(1.1, 0.0)), 10, 0), Err(EquilibriumError::NotNormalized(_))));
    }

    #[test]
    fn default_bins() {
        assert_eq!(default_bins_per_axis(10_000, 1), 22);
        assert_eq!(default_bins_per_axis(10_000, 2), 10);
        assert_eq!(default_bins_per_axis(usize::MAX, 1), 64);
    }

    #[test]
    fn fresh_samples_pass_and_uniform_fails() {
        let psi = gaussian(0.5);
        let s = sample_equilibrium(&psi, 10_000, 3).unwrap();
        for kind in [StatisticKind::TotalVariationBinned, StatisticKind::KsPerAxis] {
            let r = equivariance_test(&s.positions(), &psi, kind, None, 11).unwrap();
            assert!(r.pass, "{r:?}");
            let mut rng = rng_stream(5, 0);
            let uniform: Vec<Vec<f64>> = (0..10_000).map(|_| vec![rng.random_range(-10.0..10.0)]).collect();
            let r = equivariance_test(&uniform, &psi, kind, None, 11).unwrap();
            assert!(!r.pass && r.value > r.null_bound);
        }
    }

    #[test]
    fn size_guards() {
        let psi = gaussian(1.0);
        let s = sample_equilibrium(&psi, 999, 1).unwrap();
        assert!(matches!(
            equivariance_test(&s.positions(), &psi, StatisticKind::TotalVariationBinned, None, 0),
            Err(EquilibriumError::TooFewSamples { .. })
        ));
        let s = sample_equilibrium(&psi, 1000, 1).unwrap();
        assert!(matches!(
            equivariance_test(&s.positions(), &psi, StatisticKind::TotalVariationBinned, Some(101), 0),
            Err(EquilibriumError::TooManyBins { .. })
        ));
    }
}
