//! Two-slit interference with trajectories: no trajectory crosses the symmetry
//! axis, and marking the slit with a pointer washes out the fringes.

use bohmian::scenarios::{Context, DoubleSlit, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map_or(Ok(4000), |s| s.parse())?;
    let spec = ScenarioSpec::DoubleSlit(DoubleSlit::default());
    let (ds, checks) = spec.run(&Context::new(n, 7))?;
    let crossings = ds.table("crossings")?;
    let passed = crossings.f64_column("crossed")?.iter().filter(|c| **c > 0.0).count();
    println!("{passed} of {n} trajectories passed the barrier");
    for c in &checks {
        println!("{:<40} {:>12.4e}  {}", c.name, c.statistic, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(())
}
