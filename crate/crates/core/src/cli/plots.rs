//! Down-sampled CSVs for plotting, each at most [`MAX_PLOT_POINTS`] rows.

use crate::grid::WaveFunction;
use crate::io::Table;
use crate::scenarios::{positions_at_time, Dataset, ScenarioError};

pub const MAX_PLOT_POINTS: usize = 500;
const TRAJECTORIES_SHOWN: usize = 10;
const HISTOGRAM_BINS: usize = 100;

/// Marginal density along the first axis: `(x, ∫|ψ|² d(other axes))`.
pub fn marginal_x(psi: &WaveFunction) -> (Vec<f64>, Vec<f64>) {
    let grid = psi.grid();
    let nx = grid.axis(0).points;
    let rest = grid.len() / nx;
    let dv_rest = grid.cell_volume() / grid.axis(0).spacing();
    let density = psi.density();
    let mut m = vec![0.0; nx];
    for (k, p) in density.iter().enumerate() {
        m[k / rest] += p * dv_rest;
    }
    (grid.axis_coords(0), m)
}

/// Every `stride`-th index so that at most `limit` remain.
fn thinned(len: usize, limit: usize) -> impl Iterator<Item = usize> {
    let stride = len.div_ceil(limit).max(1);
    (0..len).step_by(stride)
}

pub fn density_plot(psi: &WaveFunction) -> Table {
    let (x, m) = marginal_x(psi);
    let mut t = Table::new(["x", "density"]);
    for i in thinned(x.len(), MAX_PLOT_POINTS) {
        t.push(vec![x[i].into(), m[i].into()]);
    }
    t
}

/// A few evenly chosen trajectories with their first coordinate.
pub fn trajectory_plot(ds: &Dataset, table: &str) -> Result<Table, ScenarioError> {
    let ensemble = ds.ensemble(table)?;
    let mut t = Table::new(["trajectory_id", "t", "x"]);
    let shown = ensemble.len().min(TRAJECTORIES_SHOWN);
    if shown == 0 {
        return Ok(t);
    }
    let per_path = MAX_PLOT_POINTS / shown;
    for id in thinned(ensemble.len(), shown) {
        let tr = &ensemble.trajectories[id];
        for k in thinned(tr.samples.len(), per_path) {
            let q = &tr.samples[k];
            t.push(vec![id.into(), q.time.into(), q.coords[0].into()]);
        }
    }
    Ok(t)
}

/// Histogram of trajectory positions along the first axis against the `|ψ|²` marginal.
pub fn histogram_plot(ds: &Dataset, table: &str, psi: &WaveFunction) -> Result<Table, ScenarioError> {
    let ensemble = ds.ensemble(table)?;
    let xs: Vec<f64> = positions_at_time(&ensemble, psi.time()).into_iter().map(|q| q[0]).collect();
    let (grid_x, m) = marginal_x(psi);
    let (lo, hi) = psi.grid().extents()[0];
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let bin = |x: f64| (((x - lo) / width).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
    let mut counts = vec![0.0; HISTOGRAM_BINS];
    for x in &xs {
        counts[bin(*x)] += 1.0;
    }
    let h = psi.grid().axis(0).spacing();
    let total: f64 = m.iter().sum::<f64>() * h;
    let mut expected = vec![0.0; HISTOGRAM_BINS];
    for (x, p) in grid_x.iter().zip(&m) {
        expected[bin(*x)] += p * h / total;
    }
    let n = xs.len().max(1) as f64;
    let mut t = Table::new(["bin_low", "bin_high", "empirical", "expected"]);
    for b in 0..HISTOGRAM_BINS {
        let a = lo + b as f64 * width;
        t.push(vec![a.into(), (a + width).into(), (counts[b] / n).into(), expected[b].into()]);
    }
    Ok(t)
}

/// All plot tables for a dataset, keyed by file stem.
pub fn plot_tables(ds: &Dataset, densities: bool, histograms: bool) -> Result<Vec<(String, Table)>, ScenarioError> {
    let mut out = Vec::new();
    for (name, psi) in &ds.frames {
        let Some(pos) = name.find("psi_") else { continue };
        let trajectories = format!("{}trajectories", &name[..pos]);
        if densities {
            out.push((format!("density_{name}"), density_plot(psi)));
        }
        if histograms && ds.tables.contains_key(&trajectories) {
            out.push((format!("histogram_{name}"), histogram_plot(ds, &trajectories, psi)?));
        }
    }
    if densities {
        for name in ds.tables.keys().filter(|k| k.ends_with("trajectories")) {
            out.push((format!("paths_{name}"), trajectory_plot(ds, name)?));
        }
    }
    Ok(out)
}
