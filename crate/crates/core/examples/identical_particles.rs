//! Two identical particles in colliding packets. Swapping the labels of the
//! initial configuration swaps the trajectories, and in the antisymmetric state
//! the particles never pass each other.

use bohmian::scenarios::{Context, IdenticalParticles, ScenarioSpec, Symmetry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for symmetry in [Symmetry::Antisymmetric, Symmetry::Symmetric] {
        let params = IdenticalParticles { symmetry, mirror_pairs: 200, ..Default::default() };
        let (ds, checks) = ScenarioSpec::IdenticalParticles(params).run(&Context::new(2000, 9))?;
        let crossings: f64 = ds.table("pairs")?.f64_column("diagonal_crossings")?.iter().sum();
        println!("{symmetry:?}: {crossings} diagonal crossings");
        for c in &checks {
            println!("  {:<40} {:>12.4e}  {}", c.name, c.statistic, if c.pass { "pass" } else { "FAIL" });
        }
    }
    Ok(())
}
