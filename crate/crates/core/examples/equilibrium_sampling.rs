//! Draw a quantum-equilibrium ensemble from |ψ|² and test it with the binned
//! total-variation statistic, then test a displaced ensemble against the same density.

use bohmian::equilibrium::{equivariance_test, sample_equilibrium, StatisticKind};
use bohmian::{make_grid, WaveFunction};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = make_grid(&[(-8.0, 8.0), (-8.0, 8.0)], &[128, 128])?;
    let psi = WaveFunction::from_fn(&grid, 0.0, |q| {
        let r2 = q[0] * q[0] + 0.5 * q[1] * q[1];
        Complex64::from_polar((-r2 / 2.0).exp() * (1.0 + q[0]).abs(), q[1])
    })?
    .normalize()?;

    let samples = sample_equilibrium(&psi, 10_000, 3)?;
    let ok = equivariance_test(&samples.positions(), &psi, StatisticKind::TotalVariationBinned, None, 99)?;
    println!("equilibrium ensemble: TV = {:.4}, 99% bound = {:.4}, pass = {}", ok.value, ok.null_bound, ok.pass);

    let shifted: Vec<Vec<f64>> = samples.positions().into_iter().map(|q| vec![q[0] + 0.3, q[1]]).collect();
    let bad = equivariance_test(&shifted, &psi, StatisticKind::TotalVariationBinned, None, 99)?;
    println!("displaced ensemble:   TV = {:.4}, 99% bound = {:.4}, pass = {}", bad.value, bad.null_bound, bad.pass);
    Ok(())
}
