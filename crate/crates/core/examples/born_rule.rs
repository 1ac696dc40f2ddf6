//! A pointer measurement on a two-outcome superposition: outcome frequencies of
//! equilibrium trials follow |c₁|² and |c₂|².

use bohmian::measurement::{outcome_statistics, MeasurementConfig, MeasurementSetup};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    for w in [0.36, 0.5, 0.9] {
        let (c1, c2) = (Complex64::new(f64::sqrt(w), 0.0), Complex64::new(0.0, f64::sqrt(1.0 - w)));
        let setup = MeasurementSetup::position_like(c1, c2, 3.0);
        let (report, _) = outcome_statistics(&setup, trials, 21, &MeasurementConfig::default())?;
        let (lo, hi) = report.intervals[0];
        println!(
            "|c₁|² = {w:.2}: outcome 1 in {:.4} of {} trials (3σ interval {lo:.4}..{hi:.4}), unclassified {}",
            report.frequencies[0], report.n_trials, report.dead_zone + report.aborted
        );
    }
    Ok(())
}
