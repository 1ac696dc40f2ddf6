//! After the pointer packets separate, the conditional wave function of the
//! subsystem equals the occupied branch, and deleting the empty branch does not
//! move the trajectory.

use bohmian::equilibrium::sample_equilibrium;
use bohmian::measurement::{effective_wavefunction_checks, BranchEvolution, MeasurementConfig, MeasurementSetup};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = Complex64::new(f64::sqrt(0.5), 0.0);
    let setup = MeasurementSetup::position_like(c, c, 3.0);
    let cfg = MeasurementConfig::default();
    let psi0 = BranchEvolution::new(&setup, cfg.dt)?.psi();
    let probes = sample_equilibrium(&psi0, 6, 4)?.configurations;
    for (q, r) in probes.iter().zip(effective_wavefunction_checks(&setup, &cfg, &probes, 3.0, 4.5)?) {
        println!(
            "start {:+.2?}: branch {}, min fidelity {:.5}, max deviation {:.2e}, branch overlap {:.1e}",
            q.coords, r.branch, r.min_fidelity, r.max_deviation, r.max_overlap
        );
    }
    Ok(())
}
