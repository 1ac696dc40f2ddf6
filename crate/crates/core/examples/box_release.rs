//! Release a particle from a box eigenstate: it stands still while the walls
//! are in place and afterwards flies off at ±ħk/m, the sign set by the side of
//! the box it started in.

use bohmian::scenarios::{BoxRelease, Context, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let spec = ScenarioSpec::BoxRelease(BoxRelease::default());
    let (_, checks) = spec.run(&Context::new(n, 7))?;
    for c in &checks {
        println!("{:<40} {:>12.4e}  {}", c.name, c.statistic, if c.pass { "pass" } else { "FAIL" });
    }
    Ok(())
}
