//! Real eigenstates guide nothing: the velocity field of the box and oscillator
//! ground states vanishes, while a superposition with an excited state moves.

use bohmian::scenarios::{Context, ScenarioSpec, StationaryPreset, StationaryRealState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for preset in [StationaryPreset::Box, StationaryPreset::Harmonic] {
        let spec = ScenarioSpec::StationaryRealState(StationaryRealState { preset, ..Default::default() });
        let (_, checks) = spec.run(&Context::new(2000, 5))?;
        println!("{preset:?}");
        for c in checks.iter().filter(|c| !c.name.starts_with("equivariance")) {
            println!("  {:<40} {:>12.4e}  {}", c.name, c.statistic, if c.pass { "pass" } else { "FAIL" });
        }
    }
    Ok(())
}
